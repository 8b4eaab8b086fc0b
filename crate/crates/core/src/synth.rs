//! Deterministic synthetic scene generator (moving capsule targets with
//! occlusion, exit/re-entry, and overlap) plus the noisy mask proposer whose
//! output quality is causally tied to how relevant the assembled memory
//! context is to the current frame. Together they stand in for a real video
//! segmentation backbone at desk scale.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{CandidateMask, CandidateSet, BRANCH_COUNT};
use crate::mask::BinaryMask;
use crate::memory::{EntrySource, MemoryEntry};
use crate::tracker::Proposer;
use crate::ClassId;

/// Pose keyframe: `[frame, row, col, angle]`, linearly interpolated.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Waypoint(pub usize, pub f64, pub f64, pub f64);

impl Waypoint {
    pub fn frame(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsuleShape {
    /// End-to-end extent in pixels, caps included.
    pub length: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub class_id: ClassId,
    pub shape: CapsuleShape,
    pub waypoints: Vec<Waypoint>,
    /// Half-open visibility intervals `[start, end)`, sorted and disjoint.
    pub visible: Vec<(usize, usize)>,
    pub z_order: i32,
}

impl TargetSpec {
    fn visible_at(&self, frame: usize) -> bool {
        self.visible
            .iter()
            .any(|&(start, end)| frame >= start && frame < end)
    }

    /// Interpolated (row, col, angle); clamps outside the keyframe range.
    fn pose_at(&self, frame: usize) -> (f64, f64, f64) {
        let wps = &self.waypoints;
        let first = &wps[0];
        if frame <= first.frame() {
            return (first.1, first.2, first.3);
        }
        let last = wps.last().unwrap();
        if frame >= last.frame() {
            return (last.1, last.2, last.3);
        }
        let i = wps.partition_point(|w| w.frame() <= frame) - 1;
        let (a, b) = (&wps[i], &wps[i + 1]);
        let span = (b.frame() - a.frame()) as f64;
        let alpha = (frame - a.frame()) as f64 / span;
        (
            a.1 + (b.1 - a.1) * alpha,
            a.2 + (b.2 - a.2) * alpha,
            a.3 + (b.3 - a.3) * alpha,
        )
    }
}

/// A full scripted scene.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    /// (height, width) in pixels.
    pub dims: (usize, usize),
    pub frame_count: usize,
    pub targets: Vec<TargetSpec>,
}

impl ScenarioScript {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.dims;
        if h == 0 || w == 0 {
            return Err(Error::InvalidScript("dims must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::InvalidScript("frame_count must be positive".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidScript("at least one target required".into()));
        }
        let mut seen = BTreeSet::new();
        for target in &self.targets {
            if !seen.insert(target.class_id) {
                return Err(Error::InvalidScript(format!(
                    "duplicate class_id {}",
                    target.class_id
                )));
            }
            if target.shape.length <= 0.0 || target.shape.radius <= 0.0 {
                return Err(Error::InvalidScript(format!(
                    "class {}: shape must have positive length and radius",
                    target.class_id
                )));
            }
            let wps = &target.waypoints;
            if wps.is_empty() || wps[0].frame() != 0 {
                return Err(Error::InvalidScript(format!(
                    "class {}: waypoints must start at frame 0",
                    target.class_id
                )));
            }
            for pair in wps.windows(2) {
                if pair[1].frame() <= pair[0].frame() {
                    return Err(Error::InvalidScript(format!(
                        "class {}: waypoint frames must be strictly increasing",
                        target.class_id
                    )));
                }
            }
            if let Some(w) = wps.iter().find(|w| w.frame() >= self.frame_count) {
                return Err(Error::InvalidScript(format!(
                    "class {}: waypoint frame {} beyond frame_count {}",
                    target.class_id,
                    w.frame(),
                    self.frame_count
                )));
            }
            let mut prev_end = 0usize;
            for (i, &(start, end)) in target.visible.iter().enumerate() {
                if start >= end {
                    return Err(Error::InvalidScript(format!(
                        "class {}: empty visibility interval [{start}, {end})",
                        target.class_id
                    )));
                }
                if i > 0 && start < prev_end {
                    return Err(Error::InvalidScript(format!(
                        "class {}: visibility intervals overlap or are unsorted",
                        target.class_id
                    )));
                }
                if end > self.frame_count {
                    return Err(Error::InvalidScript(format!(
                        "class {}: visibility end {end} beyond frame_count",
                        target.class_id
                    )));
                }
                prev_end = end;
            }
        }
        Ok(())
    }
}

/// Ground truth for one frame after z-order occlusion resolution.
#[derive(Clone, Debug)]
pub struct FrameObservation {
    pub frame_index: usize,
    /// Every scripted class, empty mask when hidden or occluded away.
    pub gt_masks: BTreeMap<ClassId, BinaryMask>,
    /// Classes whose resolved mask is nonempty.
    pub visible_classes: BTreeSet<ClassId>,
}

/// Rasterize one capsule: all pixels within `radius` of the centre segment.
fn rasterize_capsule(
    dims: (usize, usize),
    row: f64,
    col: f64,
    angle: f64,
    shape: &CapsuleShape,
) -> BinaryMask {
    let (h, w) = dims;
    let half_seg = ((shape.length - 2.0 * shape.radius) / 2.0).max(0.0);
    let (dr, dc) = (angle.sin(), angle.cos());
    let (r0, c0) = (row - half_seg * dr, col - half_seg * dc);
    let (r1, c1) = (row + half_seg * dr, col + half_seg * dc);
    let radius = shape.radius;

    let row_lo = (r0.min(r1) - radius).floor().max(0.0) as usize;
    let row_hi = (r0.max(r1) + radius).ceil().min(h as f64 - 1.0) as usize;
    let col_lo = (c0.min(c1) - radius).floor().max(0.0) as usize;
    let col_hi = (c0.max(c1) + radius).ceil().min(w as f64 - 1.0) as usize;

    let seg_r = r1 - r0;
    let seg_c = c1 - c0;
    let seg_len2 = seg_r * seg_r + seg_c * seg_c;
    let radius2 = radius * radius;

    let mut mask = BinaryMask::new(w, h);
    if row_lo > row_hi || col_lo > col_hi {
        return mask;
    }
    for r in row_lo..=row_hi {
        for c in col_lo..=col_hi {
            let pr = r as f64 - r0;
            let pc = c as f64 - c0;
            let t = if seg_len2 == 0.0 {
                0.0
            } else {
                ((pr * seg_r + pc * seg_c) / seg_len2).clamp(0.0, 1.0)
            };
            let dr2 = pr - t * seg_r;
            let dc2 = pc - t * seg_c;
            if dr2 * dr2 + dc2 * dc2 <= radius2 {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

fn render_frame(script: &ScenarioScript, frame: usize) -> FrameObservation {
    let (h, w) = script.dims;
    // paint order: ascending (z_order, class_id); later layers win contested
    // pixels
    let mut order: Vec<&TargetSpec> = script.targets.iter().collect();
    order.sort_by_key(|t| (t.z_order, t.class_id));

    let raw: Vec<BinaryMask> = order
        .iter()
        .map(|target| {
            if target.visible_at(frame) {
                let (row, col, angle) = target.pose_at(frame);
                rasterize_capsule(script.dims, row, col, angle, &target.shape)
            } else {
                BinaryMask::new(w, h)
            }
        })
        .collect();

    let mut gt_masks = BTreeMap::new();
    let mut visible_classes = BTreeSet::new();
    for (i, target) in order.iter().enumerate() {
        let mut resolved = raw[i].clone();
        for above in &raw[i + 1..] {
            resolved = resolved.subtract(above).expect("layers share dims");
        }
        if !resolved.is_empty() {
            visible_classes.insert(target.class_id);
        }
        gt_masks.insert(target.class_id, resolved);
    }
    FrameObservation {
        frame_index: frame,
        gt_masks,
        visible_classes,
    }
}

/// Render every frame of a script. Pure: identical scripts give byte-equal
/// observations.
pub fn render_scenario(script: &ScenarioScript) -> Result<Vec<FrameObservation>> {
    script.validate()?;
    let frames: Vec<usize> = (0..script.frame_count).collect();
    Ok(crate::par::map_ordered(frames, |t| render_frame(script, t)))
}

/// Best pixel IoU between the class's ground-truth mask and any context
/// entry holding that class; 0 when the class is absent from the context or
/// currently has no ground truth.
pub fn context_relevance(
    class: ClassId,
    context: &[&MemoryEntry],
    gt: &FrameObservation,
) -> f64 {
    let gt_mask = match gt.gt_masks.get(&class) {
        Some(m) if !m.is_empty() => m,
        _ => return 0.0,
    };
    let mut best = 0.0f64;
    for entry in context {
        if let Some(m) = entry.class_masks.get(&class) {
            if let Ok(v) = m.iou(gt_mask) {
                best = best.max(v);
            }
        }
    }
    best
}

/// Noise model of the synthetic proposer.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposerParams {
    pub q_min: f64,
    pub q_max: f64,
    /// Max morphological radius in pixels.
    pub r_max: usize,
    /// Max translation jitter in pixels.
    pub j_max: usize,
    /// Label-swap probability scale under overlap.
    pub p_swap_base: f64,
    /// Dropout probability scale.
    pub p_miss_base: f64,
    /// Calibration noise on the predicted IoU.
    pub sigma_iou: f64,
    /// Per-branch quality deltas.
    pub branch_offsets: [f64; BRANCH_COUNT],
}

impl Default for ProposerParams {
    fn default() -> Self {
        ProposerParams {
            q_min: 0.20,
            q_max: 0.97,
            r_max: 3,
            j_max: 3,
            p_swap_base: 0.6,
            p_miss_base: 0.5,
            sigma_iou: 0.05,
            branch_offsets: [0.0, -0.05, -0.10],
        }
    }
}

impl ProposerParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.q_min && self.q_min < self.q_max && self.q_max <= 1.0) {
            return Err(Error::InvalidScript(format!(
                "quality bounds must satisfy 0 <= q_min < q_max <= 1, got [{}, {}]",
                self.q_min, self.q_max
            )));
        }
        for (name, p) in [
            ("p_swap_base", self.p_swap_base),
            ("p_miss_base", self.p_miss_base),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidScript(format!("{name} {p} outside [0, 1]")));
            }
        }
        if self.sigma_iou < 0.0 {
            return Err(Error::InvalidScript("sigma_iou must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-(branch, class) noise draws, taken in one fixed order so the stream
/// layout never depends on intermediate values.
struct Draws {
    dilate: bool,
    jitter_dir: usize,
    swap: f64,
    miss: f64,
    iou_noise: f64,
    conf_noise: f64,
}

fn draw_visible(rng: &mut ChaCha8Rng) -> Draws {
    Draws {
        dilate: rng.random_bool(0.5),
        jitter_dir: rng.random_range(0..4),
        swap: rng.random::<f64>(),
        miss: rng.random::<f64>(),
        iou_noise: StandardNormal.sample(rng),
        conf_noise: StandardNormal.sample(rng),
    }
}

const JITTER_DIRS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Synthetic stand-in for a mask decoder: emits three candidate hypotheses
/// per frame whose quality follows the relevance of the supplied context.
#[derive(Clone, Debug)]
pub struct SyntheticProposer {
    params: ProposerParams,
}

impl SyntheticProposer {
    pub fn new(params: ProposerParams) -> Result<Self> {
        params.validate()?;
        Ok(SyntheticProposer { params })
    }

    pub fn params(&self) -> &ProposerParams {
        &self.params
    }

    /// Overlap pressure on `class`: |dilate(gt, 2) ∩ other classes| / |gt|.
    /// May exceed 1 when the class is mostly occluded.
    fn overlap_frac(&self, obs: &FrameObservation, class: ClassId) -> (f64, Option<ClassId>) {
        let gt = &obs.gt_masks[&class];
        let own = gt.count();
        if own == 0 {
            return (0.0, None);
        }
        let dilated = gt.dilate(2);
        let mut total = 0usize;
        let mut partner: Option<(ClassId, usize)> = None;
        for (other, mask) in &obs.gt_masks {
            if *other == class || mask.is_empty() {
                continue;
            }
            let inter = dilated.intersection_count(mask).expect("same dims");
            total += inter;
            if inter > 0 && partner.map_or(true, |(_, best)| inter > best) {
                partner = Some((*other, inter));
            }
        }
        (total as f64 / own as f64, partner.map(|(c, _)| c))
    }

    /// Generate candidates with the relevance of each class given directly.
    /// `interference_context` halves the label-swap probability.
    pub fn propose_with_relevance(
        &self,
        obs: &FrameObservation,
        relevance: &BTreeMap<ClassId, f64>,
        interference_context: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<CandidateSet> {
        let p = &self.params;
        let classes: Vec<ClassId> = relevance.keys().copied().collect();

        let overlap: BTreeMap<ClassId, (f64, Option<ClassId>)> = classes
            .iter()
            .map(|&c| (c, self.overlap_frac(obs, c)))
            .collect();

        let mut candidates = Vec::with_capacity(BRANCH_COUNT);
        for branch in 0..BRANCH_COUNT {
            let mut masks: BTreeMap<ClassId, BinaryMask> = BTreeMap::new();
            let mut quality: BTreeMap<ClassId, f64> = BTreeMap::new();
            let mut swap_hit: BTreeMap<ClassId, bool> = BTreeMap::new();
            let mut miss_hit: BTreeMap<ClassId, bool> = BTreeMap::new();
            let mut noises: BTreeMap<ClassId, (f64, f64)> = BTreeMap::new();

            for &class in &classes {
                let gt = obs
                    .gt_masks
                    .get(&class)
                    .ok_or(Error::MissingClass(class.0))?;
                if !obs.visible_classes.contains(&class) {
                    // hidden target: empty mask, scores drawn near zero
                    let iou_low = rng.random_range(0.0..0.05);
                    let conf_low = rng.random_range(0.0..0.05);
                    masks.insert(class, BinaryMask::new(gt.width(), gt.height()));
                    quality.insert(class, 0.0);
                    swap_hit.insert(class, false);
                    miss_hit.insert(class, false);
                    noises.insert(class, (iou_low, conf_low));
                    continue;
                }
                let draws = draw_visible(rng);
                let rho = relevance[&class];
                let q = (p.q_min + (p.q_max - p.q_min) * rho + p.branch_offsets[branch])
                    .clamp(0.0, 1.0);

                let radius = ((1.0 - q) * p.r_max as f64).round() as usize;
                let mut mask = if radius == 0 {
                    gt.clone()
                } else if draws.dilate {
                    gt.dilate(radius)
                } else {
                    gt.erode(radius)
                };
                let jitter = ((1.0 - q) * p.j_max as f64).round() as isize;
                if jitter > 0 {
                    let (dr, dc) = JITTER_DIRS[draws.jitter_dir];
                    mask = mask.translate(dr * jitter, dc * jitter);
                }

                let (frac, _) = overlap[&class];
                let mut p_swap = p.p_swap_base * frac;
                if interference_context {
                    p_swap /= 2.0;
                }
                swap_hit.insert(class, draws.swap < p_swap.clamp(0.0, 1.0));
                miss_hit.insert(class, draws.miss < (1.0 - q) * p.p_miss_base);
                noises.insert(class, (draws.iou_noise, draws.conf_noise));
                quality.insert(class, q);
                masks.insert(class, mask);
            }

            // resolve label swaps pairwise, each pair at most once per branch
            let mut consumed: BTreeSet<ClassId> = BTreeSet::new();
            for &class in &classes {
                if !swap_hit[&class] || consumed.contains(&class) {
                    continue;
                }
                let partner = match overlap[&class].1 {
                    Some(d) if !consumed.contains(&d) => d,
                    _ => continue,
                };
                let a = masks[&class].clone();
                let b = masks[&partner].clone();
                masks.insert(class, b);
                masks.insert(partner, a);
                consumed.insert(class);
                consumed.insert(partner);
            }

            let mut predicted_iou = BTreeMap::new();
            let mut confidence = BTreeMap::new();
            for &class in &classes {
                let gt = &obs.gt_masks[&class];
                let (iou_noise, conf_noise) = noises[&class];
                if !obs.visible_classes.contains(&class) {
                    predicted_iou.insert(class, iou_noise);
                    confidence.insert(class, conf_noise);
                    continue;
                }
                if miss_hit[&class] {
                    masks.insert(class, BinaryMask::new(gt.width(), gt.height()));
                }
                let true_iou = masks[&class].iou(gt)?;
                predicted_iou
                    .insert(class, (true_iou + iou_noise * p.sigma_iou).clamp(0.0, 1.0));
                confidence.insert(class, (quality[&class] + conf_noise * 0.05).clamp(0.0, 1.0));
            }

            candidates.push(CandidateMask::new(masks, predicted_iou, confidence)?);
        }
        CandidateSet::new(obs.frame_index, candidates)
    }
}

impl Proposer for SyntheticProposer {
    fn propose(
        &mut self,
        obs: &FrameObservation,
        context: &[&MemoryEntry],
        rng: &mut ChaCha8Rng,
    ) -> Result<CandidateSet> {
        let prompted: BTreeSet<ClassId> = context
            .iter()
            .filter(|e| e.source == EntrySource::Prompt)
            .flat_map(|e| e.class_masks.keys().copied())
            .collect();
        let relevance: BTreeMap<ClassId, f64> = prompted
            .iter()
            .map(|&c| (c, context_relevance(c, context, obs)))
            .collect();
        let flagged = context.iter().any(|e| e.interference_flag);
        self.propose_with_relevance(obs, &relevance, flagged, rng)
    }
}

/// The scripts shipped with the crate, keyed by name.
pub fn builtin_scenarios() -> BTreeMap<String, ScenarioScript> {
    let sources = [
        (
            "reappearance",
            include_str!("../fixtures/reappearance.json"),
        ),
        ("overlap", include_str!("../fixtures/overlap.json")),
        ("drift", include_str!("../fixtures/drift.json")),
    ];
    let mut out = BTreeMap::new();
    for (name, text) in sources {
        let script: ScenarioScript =
            serde_json::from_str(text).unwrap_or_else(|e| panic!("builtin {name}: {e}"));
        script
            .validate()
            .unwrap_or_else(|e| panic!("builtin {name}: {e}"));
        out.insert(name.to_string(), script);
    }
    out
}

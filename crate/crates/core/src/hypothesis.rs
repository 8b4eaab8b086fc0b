//! Per-frame candidate evaluation: primary-mask selection under the IoU
//! gate, interference refinement via set algebra plus largest-component
//! extraction, bounding-box-band classification, and cumulative log-score
//! branch selection.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mask::{bbox_overlap_ratio, BinaryMask, Connectivity};
use crate::ClassId;

/// One segmentation hypothesis covering all tracked classes of a frame.
#[derive(Clone, Debug)]
pub struct CandidateMask {
    class_masks: BTreeMap<ClassId, BinaryMask>,
    predicted_iou: BTreeMap<ClassId, f64>,
    confidence: BTreeMap<ClassId, f64>,
}

impl CandidateMask {
    /// The three maps must cover the same classes and all masks must share
    /// one dimension pair.
    pub fn new(
        class_masks: BTreeMap<ClassId, BinaryMask>,
        predicted_iou: BTreeMap<ClassId, f64>,
        confidence: BTreeMap<ClassId, f64>,
    ) -> Result<Self> {
        let keys: Vec<_> = class_masks.keys().copied().collect();
        if predicted_iou.keys().copied().collect::<Vec<_>>() != keys
            || confidence.keys().copied().collect::<Vec<_>>() != keys
        {
            return Err(Error::InvalidCandidateSet(
                "class key sets differ across masks/iou/confidence".into(),
            ));
        }
        let mut dims = None;
        for m in class_masks.values() {
            match dims {
                None => dims = Some(m.dims()),
                Some(d) if d != m.dims() => {
                    return Err(Error::InvalidCandidateSet(
                        "masks of one candidate differ in dimensions".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(CandidateMask {
            class_masks,
            predicted_iou,
            confidence,
        })
    }

    pub fn empty() -> Self {
        CandidateMask {
            class_masks: BTreeMap::new(),
            predicted_iou: BTreeMap::new(),
            confidence: BTreeMap::new(),
        }
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.class_masks.keys().copied()
    }

    pub fn mask(&self, class: ClassId) -> Option<&BinaryMask> {
        self.class_masks.get(&class)
    }

    pub fn masks(&self) -> &BTreeMap<ClassId, BinaryMask> {
        &self.class_masks
    }

    pub fn predicted_iou(&self, class: ClassId) -> Option<f64> {
        self.predicted_iou.get(&class).copied()
    }

    pub fn confidence(&self, class: ClassId) -> Option<f64> {
        self.confidence.get(&class).copied()
    }

    /// Mean confidence over `present`.
    pub fn avg_confidence(&self, present: &BTreeSet<ClassId>) -> Result<f64> {
        if present.is_empty() {
            return Err(Error::EmptyPresentSet);
        }
        let mut sum = 0.0;
        for class in present {
            sum += self
                .confidence(*class)
                .ok_or(Error::MissingClass(class.0))?;
        }
        Ok(sum / present.len() as f64)
    }
}

/// The three per-frame hypotheses, index-aligned across frames.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    frame_index: usize,
    candidates: Vec<CandidateMask>,
}

pub const BRANCH_COUNT: usize = 3;

impl CandidateSet {
    pub fn new(frame_index: usize, candidates: Vec<CandidateMask>) -> Result<Self> {
        if candidates.len() != BRANCH_COUNT {
            return Err(Error::InvalidCandidateSet(format!(
                "expected {BRANCH_COUNT} candidates, got {}",
                candidates.len()
            )));
        }
        Ok(CandidateSet {
            frame_index,
            candidates,
        })
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn candidate(&self, branch: usize) -> &CandidateMask {
        &self.candidates[branch]
    }

    pub fn candidates(&self) -> &[CandidateMask] {
        &self.candidates
    }
}

/// Mean predicted IoU of one candidate over the present classes.
pub fn avg_iou(candidate: &CandidateMask, present: &BTreeSet<ClassId>) -> Result<f64> {
    if present.is_empty() {
        return Err(Error::EmptyPresentSet);
    }
    let mut sum = 0.0;
    for class in present {
        sum += candidate
            .predicted_iou(*class)
            .ok_or(Error::MissingClass(class.0))?;
    }
    Ok(sum / present.len() as f64)
}

/// Index of the candidate with the highest average predicted IoU, or `None`
/// when that maximum falls below `theta` (or no class is present). Ties go
/// to the lowest index.
pub fn select_primary(
    set: &CandidateSet,
    present: &BTreeSet<ClassId>,
    theta: f64,
) -> Result<Option<usize>> {
    if present.is_empty() {
        return Ok(None);
    }
    let mut best: Option<(usize, f64)> = None;
    for (idx, cand) in set.candidates().iter().enumerate() {
        let score = avg_iou(cand, present)?;
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((idx, score));
        }
    }
    Ok(best.filter(|&(_, s)| s >= theta).map(|(idx, _)| idx))
}

/// Per-frame greedy pick: argmax of average predicted IoU without a gate.
/// Empty `present` falls back to branch 0.
pub fn greedy_branch(set: &CandidateSet, present: &BTreeSet<ClassId>) -> Result<usize> {
    if present.is_empty() {
        return Ok(0);
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (idx, cand) in set.candidates().iter().enumerate() {
        let score = avg_iou(cand, present)?;
        if score > best.1 {
            best = (idx, score);
        }
    }
    Ok(best.0)
}

/// Refine a primary mask against the union of its alternatives: keep the
/// overlapping region, and of the non-overlapping remainder keep only the
/// largest connected component.
pub fn refine_interference(
    primary: &BinaryMask,
    alternatives: &[&BinaryMask],
    connectivity: Connectivity,
) -> Result<BinaryMask> {
    let mut combined = BinaryMask::new(primary.width(), primary.height());
    for alt in alternatives {
        combined = combined.union(alt)?;
    }
    let overlap = primary.intersect(&combined)?;
    let remainder = primary.subtract(&overlap)?;
    remainder
        .largest_connected_component(connectivity)
        .union(&overlap)
}

/// Outcome of the bounding-box consistency test between the refined and the
/// primary mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    /// Ratio inside the band: no significant interference.
    Clean,
    /// Ratio below the band: strong interference.
    Interference,
    /// Ratio above the band: refinement removed nothing of note.
    Redundant,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterferenceVerdict {
    pub kind: VerdictKind,
    pub ratio: f64,
}

/// Classify the refined-vs-primary bounding-box overlap ratio against the
/// closed band [`lo`, `hi`]. An empty primary mask yields `Redundant` with
/// ratio 1.0; an empty refined mask (primary nonempty) yields ratio 0.0.
pub fn classify_interference(
    refined: &BinaryMask,
    primary: &BinaryMask,
    lo: f64,
    hi: f64,
) -> InterferenceVerdict {
    debug_assert_eq!(refined.dims(), primary.dims());
    let primary_box = match primary.bounding_box() {
        Some(b) => b,
        None => {
            return InterferenceVerdict {
                kind: VerdictKind::Redundant,
                ratio: 1.0,
            }
        }
    };
    let ratio = match refined.bounding_box() {
        Some(b) => bbox_overlap_ratio(&b, &primary_box),
        None => 0.0,
    };
    let kind = if ratio < lo {
        VerdictKind::Interference
    } else if ratio > hi {
        VerdictKind::Redundant
    } else {
        VerdictKind::Clean
    };
    InterferenceVerdict { kind, ratio }
}

/// Cumulative per-branch hypothesis scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreState {
    cumulative: [f64; BRANCH_COUNT],
    epsilon: f64,
}

impl ScoreState {
    pub fn new(epsilon: f64) -> Self {
        assert!(epsilon > 0.0, "epsilon must be positive");
        ScoreState {
            cumulative: [0.0; BRANCH_COUNT],
            epsilon,
        }
    }

    pub fn cumulative(&self) -> &[f64; BRANCH_COUNT] {
        &self.cumulative
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Add ln(avg_iou + ε) of each branch to its running total. Frames with no
/// present classes leave the state unchanged.
pub fn update_scores(
    state: &ScoreState,
    set: &CandidateSet,
    present: &BTreeSet<ClassId>,
) -> Result<ScoreState> {
    if present.is_empty() {
        return Ok(state.clone());
    }
    let mut next = state.clone();
    for (branch, cand) in set.candidates().iter().enumerate() {
        let iou = avg_iou(cand, present)?;
        next.cumulative[branch] += (iou + state.epsilon).ln();
    }
    Ok(next)
}

/// Branch with the highest cumulative score; ties go to the lowest index.
pub fn select_branch(state: &ScoreState) -> usize {
    let mut best = 0;
    for k in 1..BRANCH_COUNT {
        if state.cumulative[k] > state.cumulative[best] {
            best = k;
        }
    }
    best
}

/// Frame-level refinement outcome across all present classes.
#[derive(Clone, Debug)]
pub struct RefinementResult {
    pub primary_index: Option<usize>,
    pub refined: BTreeMap<ClassId, BinaryMask>,
    pub verdict: InterferenceVerdict,
}

/// Run refinement and classification per present class against the chosen
/// primary candidate, then fold the per-class verdicts into one frame
/// verdict: any `Interference` wins, else any `Clean`, else `Redundant`.
/// The reported ratio is taken from the first class (ascending id) carrying
/// the winning verdict, with `Interference` reporting the minimum ratio.
pub fn refine_frame(
    set: &CandidateSet,
    primary_index: usize,
    present: &BTreeSet<ClassId>,
    lo: f64,
    hi: f64,
    connectivity: Connectivity,
) -> Result<RefinementResult> {
    let primary = set.candidate(primary_index);
    let mut refined = BTreeMap::new();
    let mut verdicts: Vec<InterferenceVerdict> = Vec::new();
    for class in present {
        let primary_mask = primary
            .mask(*class)
            .ok_or(Error::MissingClass(class.0))?;
        let alternatives: Vec<&BinaryMask> = set
            .candidates()
            .iter()
            .enumerate()
            .filter(|(idx, _)| *idx != primary_index)
            .map(|(_, cand)| cand.mask(*class).ok_or(Error::MissingClass(class.0)))
            .collect::<Result<_>>()?;
        let refined_mask = refine_interference(primary_mask, &alternatives, connectivity)?;
        verdicts.push(classify_interference(&refined_mask, primary_mask, lo, hi));
        refined.insert(*class, refined_mask);
    }
    let verdict = fold_verdicts(&verdicts);
    Ok(RefinementResult {
        primary_index: Some(primary_index),
        refined,
        verdict,
    })
}

fn fold_verdicts(verdicts: &[InterferenceVerdict]) -> InterferenceVerdict {
    debug_assert!(!verdicts.is_empty());
    let interference = verdicts
        .iter()
        .filter(|v| v.kind == VerdictKind::Interference)
        .fold(None::<f64>, |acc, v| {
            Some(acc.map_or(v.ratio, |r| r.min(v.ratio)))
        });
    if let Some(ratio) = interference {
        return InterferenceVerdict {
            kind: VerdictKind::Interference,
            ratio,
        };
    }
    if let Some(v) = verdicts.iter().find(|v| v.kind == VerdictKind::Clean) {
        return *v;
    }
    verdicts[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cid(n: u32) -> ClassId {
        ClassId(n)
    }

    fn present(ids: &[u32]) -> BTreeSet<ClassId> {
        ids.iter().map(|&n| cid(n)).collect()
    }

    fn candidate_with_ious(pairs: &[(u32, f64)]) -> CandidateMask {
        let mut masks = BTreeMap::new();
        let mut ious = BTreeMap::new();
        let mut confs = BTreeMap::new();
        for &(id, iou) in pairs {
            masks.insert(cid(id), BinaryMask::new(4, 4));
            ious.insert(cid(id), iou);
            confs.insert(cid(id), iou);
        }
        CandidateMask::new(masks, ious, confs).unwrap()
    }

    fn set_with_avgs(frame: usize, avgs: [f64; 3]) -> CandidateSet {
        let cands = avgs
            .iter()
            .map(|&v| candidate_with_ious(&[(1, v)]))
            .collect();
        CandidateSet::new(frame, cands).unwrap()
    }

    #[test]
    fn avg_iou_cases() {
        let c = candidate_with_ious(&[(1, 0.8), (2, 0.6)]);
        assert_abs_diff_eq!(avg_iou(&c, &present(&[1, 2])).unwrap(), 0.7);
        assert_abs_diff_eq!(avg_iou(&c, &present(&[1])).unwrap(), 0.8);
        let perfect = candidate_with_ious(&[(1, 1.0), (2, 1.0)]);
        assert_abs_diff_eq!(avg_iou(&perfect, &present(&[1, 2])).unwrap(), 1.0);
        assert!(matches!(
            avg_iou(&c, &BTreeSet::new()),
            Err(Error::EmptyPresentSet)
        ));
    }

    #[test]
    fn select_primary_gate_and_ties() {
        let p = present(&[1]);
        let s = set_with_avgs(0, [0.90, 0.70, 0.85]);
        assert_eq!(select_primary(&s, &p, 0.8).unwrap(), Some(0));
        let s = set_with_avgs(0, [0.70, 0.75, 0.60]);
        assert_eq!(select_primary(&s, &p, 0.8).unwrap(), None);
        let s = set_with_avgs(0, [0.90, 0.90, 0.20]);
        assert_eq!(select_primary(&s, &p, 0.8).unwrap(), Some(0));
        // boundary: exactly theta passes
        let s = set_with_avgs(0, [0.80, 0.10, 0.10]);
        assert_eq!(select_primary(&s, &p, 0.8).unwrap(), Some(0));
        assert_eq!(select_primary(&s, &BTreeSet::new(), 0.8).unwrap(), None);
    }

    fn mask_of(px: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(8, 8);
        for &(r, c) in px {
            m.set(r, c, true);
        }
        m
    }

    #[test]
    fn refine_disjoint_alternatives_collapse_to_lcc() {
        // primary: 6-px blob plus far 3-px blob; alternatives miss both
        let big: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)];
        let small: Vec<(usize, usize)> = vec![(6, 6), (6, 7), (7, 6)];
        let mut px = big.clone();
        px.extend(&small);
        let primary = mask_of(&px);
        let alt = mask_of(&[(4, 4)]);
        let refined =
            refine_interference(&primary, &[&alt], Connectivity::Four).unwrap();
        assert_eq!(refined, mask_of(&big));
        // no alternatives at all behaves the same
        let refined_none = refine_interference(&primary, &[], Connectivity::Four).unwrap();
        assert_eq!(refined_none, mask_of(&big));
    }

    #[test]
    fn refine_full_cover_restores_primary() {
        let primary = mask_of(&[(1, 1), (1, 2), (5, 5)]);
        let cover = BinaryMask::filled(8, 8);
        let refined =
            refine_interference(&primary, &[&cover], Connectivity::Four).unwrap();
        assert_eq!(refined, primary);
    }

    #[test]
    fn refine_partial_overlap_fixture() {
        // primary: 6-px blob and 3-px blob; alternatives overlap 2 px of the
        // small blob. Expected (set-algebra oracle evaluated below): the
        // 6-px blob (largest component of the non-overlap) plus the 2
        // overlapped pixels.
        let big: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)];
        let small: Vec<(usize, usize)> = vec![(5, 5), (5, 6), (6, 5)];
        let mut px = big.clone();
        px.extend(&small);
        let primary = mask_of(&px);
        let alt = mask_of(&[(5, 5), (5, 6), (4, 5), (4, 6)]);

        // independent oracle: evaluate the formula with per-pixel sets
        let overlap: Vec<(usize, usize)> = px
            .iter()
            .copied()
            .filter(|p| [(5, 5), (5, 6)].contains(p))
            .collect();
        assert_eq!(overlap.len(), 2);
        let mut expect = big.clone();
        expect.extend(&overlap);

        let refined =
            refine_interference(&primary, &[&alt], Connectivity::Four).unwrap();
        assert_eq!(refined, mask_of(&expect));
    }

    #[test]
    fn refine_random_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let rand_mask = |rng: &mut ChaCha8Rng| {
                let density = rng.random_range(0.1..0.6);
                BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(density))
            };
            let primary = rand_mask(&mut rng);
            let a1 = rand_mask(&mut rng);
            let a2 = rand_mask(&mut rng);
            let refined =
                refine_interference(&primary, &[&a1, &a2], Connectivity::Four).unwrap();
            // refined ⊆ primary
            assert_eq!(refined.intersect(&primary).unwrap(), refined);
            // refined ⊇ primary ∩ (a1 ∪ a2)
            let overlap = primary.intersect(&a1.union(&a2).unwrap()).unwrap();
            assert_eq!(refined.intersect(&overlap).unwrap(), overlap);
        }
    }

    #[test]
    fn classify_fixture_ratios() {
        // identical boxes
        let m = mask_of(&[(1, 1), (2, 2)]);
        let v = classify_interference(&m, &m, 0.6, 0.9);
        assert_eq!(v.kind, VerdictKind::Redundant);
        assert_eq!(v.ratio, 1.0);

        // refined bbox 12 cols x 10 rows inside primary bbox 16 x 10 → 0.75
        let primary = BinaryMask::from_fn(20, 12, |r, c| r < 10 && c < 16);
        let refined = BinaryMask::from_fn(20, 12, |r, c| r < 10 && c < 12);
        let v = classify_interference(&refined, &primary, 0.6, 0.9);
        assert_abs_diff_eq!(v.ratio, 120.0 / 160.0);
        assert_eq!(v.kind, VerdictKind::Clean);

        // refined bbox 4 x 10 → 0.25
        let refined = BinaryMask::from_fn(20, 12, |r, c| r < 10 && c < 4);
        let v = classify_interference(&refined, &primary, 0.6, 0.9);
        assert_abs_diff_eq!(v.ratio, 40.0 / 160.0);
        assert_eq!(v.kind, VerdictKind::Interference);
    }

    #[test]
    fn classify_empty_primary_is_redundant() {
        let empty = BinaryMask::new(8, 8);
        let v = classify_interference(&empty, &empty, 0.6, 0.9);
        assert_eq!(v.kind, VerdictKind::Redundant);
        assert_eq!(v.ratio, 1.0);
    }

    #[test]
    fn classify_band_is_closed_and_partitions() {
        let primary = BinaryMask::from_fn(40, 12, |r, c| r < 10 && c < 40);
        for width in 1..=40usize {
            let refined = BinaryMask::from_fn(40, 12, |r, c| r < 10 && c < width);
            let v = classify_interference(&refined, &primary, 0.6, 0.9);
            let expect = if v.ratio < 0.6 {
                VerdictKind::Interference
            } else if v.ratio > 0.9 {
                VerdictKind::Redundant
            } else {
                VerdictKind::Clean
            };
            assert_eq!(v.kind, expect);
        }
        // exact boundaries classify Clean
        let primary = BinaryMask::from_fn(10, 1, |_, _| true);
        let at_lo = BinaryMask::from_fn(10, 1, |_, c| c < 6);
        assert_eq!(
            classify_interference(&at_lo, &primary, 0.6, 0.9).kind,
            VerdictKind::Clean
        );
        let at_hi = BinaryMask::from_fn(10, 1, |_, c| c < 9);
        assert_eq!(
            classify_interference(&at_hi, &primary, 0.6, 0.9).kind,
            VerdictKind::Clean
        );
    }

    #[test]
    fn update_scores_matches_log_oracle() {
        let state = ScoreState::new(1e-6);
        let set = set_with_avgs(0, [0.9, 0.5, 0.7]);
        let next = update_scores(&state, &set, &present(&[1])).unwrap();
        for (k, &iou) in [0.9, 0.5, 0.7].iter().enumerate() {
            assert_abs_diff_eq!(
                next.cumulative()[k],
                (iou + 1e-6f64).ln(),
                epsilon = 1e-12
            );
        }
        // frozen oracle values
        assert_abs_diff_eq!(next.cumulative()[0], -0.10536, epsilon = 1e-4);
        assert_abs_diff_eq!(next.cumulative()[1], -0.69315, epsilon = 1e-4);
        assert_abs_diff_eq!(next.cumulative()[2], -0.35667, epsilon = 1e-4);
    }

    #[test]
    fn update_scores_extremes() {
        let state = ScoreState::new(1e-6);
        let set = set_with_avgs(0, [1.0, 1.0, 1.0]);
        let next = update_scores(&state, &set, &present(&[1])).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(next.cumulative()[k], 1e-6, epsilon = 1e-9);
        }
        let set = set_with_avgs(1, [0.5, 0.5, 0.0]);
        let next = update_scores(&next, &set, &present(&[1])).unwrap();
        assert_abs_diff_eq!(
            next.cumulative()[2] - 1e-6f64.ln().min(0.0),
            1e-6,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(1e-6f64.ln(), -13.8155, epsilon = 1e-3);
    }

    #[test]
    fn update_scores_skips_empty_present() {
        let state = ScoreState::new(1e-6);
        let set = set_with_avgs(0, [0.9, 0.5, 0.7]);
        let next = update_scores(&state, &set, &BTreeSet::new()).unwrap();
        assert_eq!(next, state);
    }

    #[test]
    fn select_branch_argmax_and_ties() {
        let mut s = ScoreState::new(1e-6);
        s.cumulative = [-0.1, -0.7, -0.35];
        assert_eq!(select_branch(&s), 0);
        s.cumulative = [-1.0, -1.0, -1.0];
        assert_eq!(select_branch(&s), 0);
        s.cumulative = [-5.0, -1.0, -9.0];
        assert_eq!(select_branch(&s), 1);
    }

    #[test]
    fn cumulative_selection_matches_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let len = rng.random_range(1..=10usize);
            let seq: Vec<[f64; 3]> = (0..len)
                .map(|_| {
                    [
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                        rng.random_range(0.0..1.0),
                    ]
                })
                .collect();
            let mut state = ScoreState::new(1e-6);
            for (t, avgs) in seq.iter().enumerate() {
                let set = set_with_avgs(t, *avgs);
                state = update_scores(&state, &set, &present(&[1])).unwrap();
            }
            let mut products = [1.0f64; 3];
            for avgs in &seq {
                for k in 0..3 {
                    products[k] *= avgs[k] + 1e-6;
                }
            }
            let mut oracle = 0;
            for k in 1..3 {
                if products[k] > products[oracle] {
                    oracle = k;
                }
            }
            assert_eq!(select_branch(&state), oracle);
        }
    }

    #[test]
    fn update_scores_is_monotone_in_iou() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let base: f64 = rng.random_range(0.0..0.9);
            let bump: f64 = rng.random_range(0.0..(1.0 - base));
            let state = ScoreState::new(1e-6);
            let low = update_scores(&state, &set_with_avgs(0, [base, 0.5, 0.5]), &present(&[1]))
                .unwrap();
            let high = update_scores(
                &state,
                &set_with_avgs(0, [base + bump, 0.5, 0.5]),
                &present(&[1]),
            )
            .unwrap();
            assert!(high.cumulative()[0] >= low.cumulative()[0]);
        }
    }

    #[test]
    fn refine_frame_folds_multi_class_verdicts() {
        // class 1: fragmented primary with disagreeing alternatives →
        // interference; class 2: consistent → redundant. Frame verdict:
        // interference.
        let frag: Vec<(usize, usize)> = vec![(0, 0), (0, 1), (7, 7)];
        let make = |px1: &[(usize, usize)], px2: &[(usize, usize)], iou: f64| {
            let mut masks = BTreeMap::new();
            masks.insert(cid(1), mask_of(px1));
            masks.insert(cid(2), mask_of(px2));
            let mut ious = BTreeMap::new();
            ious.insert(cid(1), iou);
            ious.insert(cid(2), iou);
            let confs = ious.clone();
            CandidateMask::new(masks, ious, confs).unwrap()
        };
        let c0 = make(&frag, &[(4, 4), (4, 5)], 0.9);
        let c1 = make(&[(3, 0)], &[(4, 4), (4, 5)], 0.8);
        let c2 = make(&[(3, 1)], &[(4, 4), (4, 5)], 0.8);
        let set = CandidateSet::new(0, vec![c0, c1, c2]).unwrap();
        let result = refine_frame(
            &set,
            0,
            &present(&[1, 2]),
            0.6,
            0.9,
            Connectivity::Four,
        )
        .unwrap();
        assert_eq!(result.verdict.kind, VerdictKind::Interference);
        assert_eq!(result.primary_index, Some(0));
        // class-1 refined mask keeps only the larger fragment
        assert_eq!(result.refined[&cid(1)], mask_of(&[(0, 0), (0, 1)]));
        // refined ⊆ primary per class
        for (class, refined) in &result.refined {
            let primary = set.candidate(0).mask(*class).unwrap();
            assert_eq!(refined.intersect(primary).unwrap(), *refined);
        }
    }
}

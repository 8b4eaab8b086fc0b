//! The inference driver: one-prompt, multi-target, single-loop tracking over
//! a frame sequence, wiring proposer → hypothesis evaluation → memory policy
//! per frame. Four policies are supported: the FIFO baseline, each curated
//! store alone, and the full augmented bank.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::{
    self, CandidateMask, CandidateSet, InterferenceVerdict, RefinementResult, ScoreState,
    VerdictKind,
};
use crate::mask::{rle_encode, BinaryMask, Connectivity};
use crate::memory::{BankConfig, BankState, EntrySource, FifoBank, MemoryBank, MemoryEntry};
use crate::synth::FrameObservation;
use crate::ClassId;

/// Which memory policy drives a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Plain FIFO queue plus prompts: the baseline tracker.
    #[serde(rename = "fifo")]
    Fifo,
    /// Cumulative branch scoring plus the score-gated context store.
    #[serde(rename = "cam")]
    CamOnly,
    /// Greedy branch pick plus the occlusion store.
    #[serde(rename = "orm")]
    OrmOnly,
    /// Both stores plus cumulative scoring.
    #[serde(rename = "ma")]
    MaSam2,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Fifo,
        PolicyKind::CamOnly,
        PolicyKind::OrmOnly,
        PolicyKind::MaSam2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "fifo",
            PolicyKind::CamOnly => "cam",
            PolicyKind::OrmOnly => "orm",
            PolicyKind::MaSam2 => "ma",
        }
    }

    /// Row label used in the ablation table.
    pub fn table_label(self) -> &'static str {
        match self {
            PolicyKind::Fifo => "SAM2",
            PolicyKind::CamOnly => "+ CAM",
            PolicyKind::OrmOnly => "+ ORM",
            PolicyKind::MaSam2 => "+ CAM + ORM",
        }
    }

    fn uses_cumulative_scores(self) -> bool {
        matches!(self, PolicyKind::CamOnly | PolicyKind::MaSam2)
    }

    fn uses_orm(self) -> bool {
        matches!(self, PolicyKind::OrmOnly | PolicyKind::MaSam2)
    }

    fn uses_cam(self) -> bool {
        matches!(self, PolicyKind::CamOnly | PolicyKind::MaSam2)
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fifo" => Ok(PolicyKind::Fifo),
            "cam" => Ok(PolicyKind::CamOnly),
            "orm" => Ok(PolicyKind::OrmOnly),
            "ma" => Ok(PolicyKind::MaSam2),
            other => Err(Error::InvalidPrompt(format!(
                "unknown policy '{other}' (expected fifo|cam|orm|ma)"
            ))),
        }
    }
}

/// One mask prompt per class at its first appearance.
#[derive(Clone, Debug, Default)]
pub struct Prompt {
    entries: BTreeMap<ClassId, (usize, BinaryMask)>,
}

impl Prompt {
    pub fn new() -> Self {
        Prompt::default()
    }

    pub fn insert(&mut self, class: ClassId, frame: usize, mask: BinaryMask) -> Result<()> {
        if mask.is_empty() {
            return Err(Error::InvalidPrompt(format!(
                "class {class}: prompt mask is empty"
            )));
        }
        if self.entries.insert(class, (frame, mask)).is_some() {
            return Err(Error::DuplicatePrompt(class.0));
        }
        Ok(())
    }

    /// Derive the prompt from ground truth: each class's mask at its first
    /// visible frame.
    pub fn from_observations(frames: &[FrameObservation]) -> Result<Prompt> {
        let mut prompt = Prompt::new();
        let mut classes: BTreeSet<ClassId> = BTreeSet::new();
        for obs in frames {
            classes.extend(obs.gt_masks.keys().copied());
        }
        for class in classes {
            let first = frames
                .iter()
                .find(|obs| obs.visible_classes.contains(&class));
            if let Some(obs) = first {
                prompt.insert(class, obs.frame_index, obs.gt_masks[&class].clone())?;
            }
        }
        if prompt.entries.is_empty() {
            return Err(Error::InvalidPrompt(
                "no class is ever visible in the sequence".into(),
            ));
        }
        Ok(prompt)
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.entries.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ClassId, usize, &BinaryMask)> + '_ {
        self.entries
            .iter()
            .map(|(&class, (frame, mask))| (class, *frame, mask))
    }

    fn validate_against(&self, frames: &[FrameObservation]) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvalidPrompt("prompt has no classes".into()));
        }
        for (&class, &(frame, _)) in &self.entries {
            if frame >= frames.len() {
                return Err(Error::InvalidPrompt(format!(
                    "class {class}: first appearance {frame} beyond sequence length {}",
                    frames.len()
                )));
            }
            if !frames.iter().any(|obs| obs.gt_masks.contains_key(&class)) {
                return Err(Error::InvalidPrompt(format!(
                    "class {class}: absent from all frames"
                )));
            }
        }
        Ok(())
    }
}

/// Pluggable mask proposer: the stand-in for the segmentation backbone.
/// Implementations must return exactly three candidates covering every
/// prompted class and be deterministic given identical inputs and stream
/// state.
pub trait Proposer {
    fn propose(
        &mut self,
        obs: &FrameObservation,
        context: &[&MemoryEntry],
        rng: &mut ChaCha8Rng,
    ) -> Result<CandidateSet>;
}

/// Per-frame output record.
#[derive(Clone, Debug)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub branch: usize,
    pub verdict: Option<InterferenceVerdict>,
    pub context_frames: Vec<usize>,
    pub masks: BTreeMap<ClassId, BinaryMask>,
}

/// Store-mutation counters, used to assert policy containment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub fifo_pushes: usize,
    pub orm_inserts: usize,
    pub cam_inserts: usize,
    pub recent_updates: usize,
    pub gate_failures: usize,
}

#[derive(Clone, Debug)]
pub struct TrackResult {
    pub policy: PolicyKind,
    pub seed: u64,
    pub frames: Vec<FrameRecord>,
    pub final_scores: ScoreState,
    pub stats: StoreStats,
    pub bank_trace: Vec<BankState>,
}

impl TrackResult {
    /// One JSON object per frame:
    /// `{"frame":..,"branch":..,"verdict":..,"context":[..],"masks":{"<class>":"W H r0 r1 .."}}`
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.frames {
            out.push_str(&frame_record_json(rec));
            out.push('\n');
        }
        out
    }
}

pub fn frame_record_json(rec: &FrameRecord) -> String {
    #[derive(Serialize)]
    struct Line<'a> {
        frame: usize,
        branch: usize,
        verdict: Option<VerdictKind>,
        context: &'a [usize],
        masks: BTreeMap<String, String>,
    }
    let masks = rec
        .masks
        .iter()
        .map(|(class, mask)| (class.to_string(), rle_encode(mask).to_text_line()))
        .collect();
    serde_json::to_string(&Line {
        frame: rec.frame_index,
        branch: rec.branch,
        verdict: rec.verdict.as_ref().map(|v| v.kind),
        context: &rec.context_frames,
        masks,
    })
    .expect("frame record serializes")
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-frame stream, split from the sequence seed by frame index alone so
/// the same frame sees identical noise under every policy.
pub fn frame_rng(seed: u64, frame: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ frame as u64))
}

enum Bank {
    Fifo(FifoBank),
    Augmented(MemoryBank),
}

impl Bank {
    fn install_prompt(&mut self, class: ClassId, frame: usize, mask: BinaryMask) -> Result<()> {
        match self {
            Bank::Fifo(b) => b.install_prompt(class, frame, mask),
            Bank::Augmented(b) => b.install_prompt(class, frame, mask),
        }
    }

    fn context(&self) -> Vec<&MemoryEntry> {
        match self {
            Bank::Fifo(b) => b.context(),
            Bank::Augmented(b) => b.assemble_context(),
        }
    }

    fn state(&self) -> BankState {
        match self {
            Bank::Fifo(b) => BankState {
                prompt: b.context().iter().filter(|e| e.source == EntrySource::Prompt).map(|e| e.frame_index).collect(),
                orm: Vec::new(),
                cam: Vec::new(),
                recent: b.queue_frames().last().copied(),
            },
            Bank::Augmented(b) => b.state(),
        }
    }
}

fn entry_from_candidate(
    frame: usize,
    source: EntrySource,
    candidate: &CandidateMask,
    present: &BTreeSet<ClassId>,
) -> Result<MemoryEntry> {
    Ok(MemoryEntry {
        frame_index: frame,
        source,
        class_masks: candidate.masks().clone(),
        avg_confidence: candidate.avg_confidence(present)?,
        avg_predicted_iou: hypothesis::avg_iou(candidate, present)?,
        interference_flag: false,
    })
}

/// Run one sequence under one policy. Deterministic for fixed
/// (frames, prompt, policy, cfg, seed).
pub fn run_sequence(
    frames: &[FrameObservation],
    prompt: &Prompt,
    policy: PolicyKind,
    cfg: &BankConfig,
    proposer: &mut dyn Proposer,
    seed: u64,
) -> Result<TrackResult> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidScript("empty frame sequence".into()));
    }
    prompt.validate_against(frames)?;

    let mut bank = match policy {
        PolicyKind::Fifo => Bank::Fifo(FifoBank::new(cfg.clone())?),
        _ => Bank::Augmented(MemoryBank::new(cfg.clone())?),
    };
    let mut scores = ScoreState::new(cfg.epsilon);
    let mut stats = StoreStats::default();
    let mut records = Vec::with_capacity(frames.len());
    let mut bank_trace = Vec::with_capacity(frames.len());
    let mut prompted: BTreeSet<ClassId> = BTreeSet::new();

    for (t, obs) in frames.iter().enumerate() {
        for (class, first_frame, mask) in prompt.entries() {
            if first_frame == t {
                bank.install_prompt(class, t, mask.clone())?;
                prompted.insert(class);
            }
        }

        let context = bank.context();
        let context_frames: Vec<usize> = context.iter().map(|e| e.frame_index).collect();

        let mut rng = frame_rng(seed, t);
        let set = proposer.propose(obs, &context, &mut rng)?;
        validate_candidates(&set, t, &prompted)?;

        let present = prompted.clone();

        let branch = if policy.uses_cumulative_scores() {
            if !present.is_empty() {
                scores = hypothesis::update_scores(&scores, &set, &present)?;
            }
            hypothesis::select_branch(&scores)
        } else {
            hypothesis::greedy_branch(&set, &present)?
        };
        let chosen = set.candidate(branch);

        let mut verdict = None;
        let mut refinement: Option<RefinementResult> = None;
        if policy != PolicyKind::Fifo && !present.is_empty() {
            match hypothesis::select_primary(&set, &present, cfg.theta_iou)? {
                Some(primary) => {
                    let refined = hypothesis::refine_frame(
                        &set,
                        primary,
                        &present,
                        cfg.band_lo,
                        cfg.band_hi,
                        Connectivity::Four,
                    )?;
                    verdict = Some(refined.verdict);
                    refinement = Some(refined);
                }
                None => stats.gate_failures += 1,
            }
        }

        if !present.is_empty() {
            match &mut bank {
                Bank::Fifo(fifo) => {
                    fifo.update(entry_from_candidate(t, EntrySource::Recent, chosen, &present)?);
                    stats.fifo_pushes += 1;
                }
                Bank::Augmented(mem) => {
                    if let Some(refined) = &refinement {
                        match refined.verdict.kind {
                            VerdictKind::Interference if policy.uses_orm() => {
                                let primary = set.candidate(
                                    refined.primary_index.expect("primary set by refine_frame"),
                                );
                                let entry = MemoryEntry {
                                    frame_index: t,
                                    source: EntrySource::Orm,
                                    class_masks: refined.refined.clone(),
                                    avg_confidence: primary.avg_confidence(&present)?,
                                    avg_predicted_iou: hypothesis::avg_iou(primary, &present)?,
                                    interference_flag: true,
                                };
                                mem.orm_insert(entry)?;
                                stats.orm_inserts += 1;
                            }
                            VerdictKind::Clean | VerdictKind::Redundant if policy.uses_cam() => {
                                let entry =
                                    entry_from_candidate(t, EntrySource::Cam, chosen, &present)?;
                                if mem.cam_admit(&entry) {
                                    mem.cam_insert(entry);
                                    stats.cam_inserts += 1;
                                }
                            }
                            _ => {}
                        }
                    }
                    mem.set_recent(entry_from_candidate(t, EntrySource::Recent, chosen, &present)?);
                    stats.recent_updates += 1;
                }
            }
        }

        bank_trace.push(bank.state());
        records.push(FrameRecord {
            frame_index: t,
            branch,
            verdict,
            context_frames,
            masks: chosen.masks().clone(),
        });
    }

    Ok(TrackResult {
        policy,
        seed,
        frames: records,
        final_scores: scores,
        stats,
        bank_trace,
    })
}

fn validate_candidates(set: &CandidateSet, frame: usize, prompted: &BTreeSet<ClassId>) -> Result<()> {
    if set.frame_index() != frame {
        return Err(Error::ProposerContract(format!(
            "candidate set is for frame {}, expected {frame}",
            set.frame_index()
        )));
    }
    for (idx, candidate) in set.candidates().iter().enumerate() {
        for class in prompted {
            if candidate.mask(*class).is_none() {
                return Err(Error::ProposerContract(format!(
                    "candidate {idx} does not cover prompted class {class}"
                )));
            }
        }
    }
    Ok(())
}

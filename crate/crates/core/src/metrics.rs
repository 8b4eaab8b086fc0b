//! Segmentation evaluation and the four-policy ablation sweep.
//!
//! Three metrics are reported, all as percentages:
//! - challenge IoU: per frame, the mean pixel IoU over classes present in
//!   that frame's ground truth; the final value is the mean over evaluated
//!   frames (frames with no ground-truth class are skipped);
//! - IoU: like challenge IoU but a frame's class set also includes classes
//!   the prediction hallucinated, penalizing them;
//! - mcIoU: mean over classes (appearing anywhere in ground truth) of the
//!   dataset-accumulated per-class IoU.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::memory::BankConfig;
use crate::synth::{render_scenario, FrameObservation, ProposerParams, ScenarioScript, SyntheticProposer};
use crate::tracker::{run_sequence, PolicyKind, Prompt, TrackResult};
use crate::ClassId;

/// Scores for one run.
#[derive(Clone, Debug, Serialize)]
pub struct MetricReport {
    pub challenge_iou: f64,
    pub iou: f64,
    pub mciou: f64,
    pub per_class: BTreeMap<ClassId, f64>,
    pub frames_evaluated: usize,
}

fn pair_counts(pred: Option<&BinaryMask>, gt: Option<&BinaryMask>) -> Result<(usize, usize)> {
    match (pred, gt) {
        (Some(p), Some(g)) => Ok((p.intersection_count(g)?, p.count() + g.count() - p.intersection_count(g)?)),
        (Some(p), None) => Ok((0, p.count())),
        (None, Some(g)) => Ok((0, g.count())),
        (None, None) => Ok((0, 0)),
    }
}

fn pair_iou(pred: Option<&BinaryMask>, gt: &BinaryMask) -> Result<f64> {
    match pred {
        Some(p) => p.iou(gt),
        None => Ok(if gt.is_empty() { 1.0 } else { 0.0 }),
    }
}

/// Dataset-accumulated IoU of aligned mask sequences: Σ|∩| / Σ|∪|. `None`
/// when the accumulated union is empty (the class never appears on either
/// side).
pub fn class_iou(pred: &[BinaryMask], gt: &[BinaryMask]) -> Result<Option<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        inter += p.intersection_count(g)?;
        union += p.count() + g.count() - p.intersection_count(g)?;
    }
    if union == 0 {
        Ok(None)
    } else {
        Ok(Some(inter as f64 / union as f64))
    }
}

fn check_alignment(result: &TrackResult, gt: &[FrameObservation]) -> Result<()> {
    if result.frames.len() != gt.len() {
        return Err(Error::LengthMismatch(result.frames.len(), gt.len()));
    }
    Ok(())
}

/// Frame-averaged IoU over ground-truth-present classes, as a percentage.
pub fn challenge_iou(result: &TrackResult, gt: &[FrameObservation]) -> Result<f64> {
    check_alignment(result, gt)?;
    let mut total = 0.0;
    let mut evaluated = 0usize;
    for (rec, obs) in result.frames.iter().zip(gt) {
        if obs.visible_classes.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for class in &obs.visible_classes {
            sum += pair_iou(rec.masks.get(class), &obs.gt_masks[class])?;
        }
        total += sum / obs.visible_classes.len() as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::NoEvaluableFrames);
    }
    Ok(100.0 * total / evaluated as f64)
}

/// Like [`challenge_iou`] but each frame's class set also includes classes
/// with a nonempty predicted mask, so hallucinations score zero.
pub fn iou_metric(result: &TrackResult, gt: &[FrameObservation]) -> Result<f64> {
    check_alignment(result, gt)?;
    let mut total = 0.0;
    let mut evaluated = 0usize;
    for (rec, obs) in result.frames.iter().zip(gt) {
        let mut classes: BTreeSet<ClassId> = obs.visible_classes.clone();
        classes.extend(
            rec.masks
                .iter()
                .filter(|(_, m)| !m.is_empty())
                .map(|(c, _)| *c),
        );
        if classes.is_empty() {
            continue;
        }
        let mut sum = 0.0;
        for class in &classes {
            let (inter, union) = pair_counts(rec.masks.get(class), obs.gt_masks.get(class))?;
            sum += if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            };
        }
        total += sum / classes.len() as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::NoEvaluableFrames);
    }
    Ok(100.0 * total / evaluated as f64)
}

/// Dataset-accumulated IoU per class (percentage), over classes appearing
/// anywhere in the ground truth.
pub fn per_class_iou(
    result: &TrackResult,
    gt: &[FrameObservation],
) -> Result<BTreeMap<ClassId, f64>> {
    check_alignment(result, gt)?;
    let mut classes: BTreeSet<ClassId> = BTreeSet::new();
    for obs in gt {
        classes.extend(obs.visible_classes.iter().copied());
    }
    let mut out = BTreeMap::new();
    for class in classes {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (rec, obs) in result.frames.iter().zip(gt) {
            let (i, u) = pair_counts(rec.masks.get(&class), obs.gt_masks.get(&class))?;
            inter += i;
            union += u;
        }
        debug_assert!(union > 0, "class appears in gt, union cannot be zero");
        out.insert(class, 100.0 * inter as f64 / union as f64);
    }
    Ok(out)
}

/// Mean of the per-class accumulated IoUs, as a percentage.
pub fn mciou(result: &TrackResult, gt: &[FrameObservation]) -> Result<f64> {
    let per_class = per_class_iou(result, gt)?;
    if per_class.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    Ok(per_class.values().sum::<f64>() / per_class.len() as f64)
}

pub fn metric_report(result: &TrackResult, gt: &[FrameObservation]) -> Result<MetricReport> {
    let challenge = challenge_iou(result, gt)?;
    let iou = iou_metric(result, gt)?;
    let per_class = per_class_iou(result, gt)?;
    let mciou = per_class.values().sum::<f64>() / per_class.len() as f64;
    let frames_evaluated = gt.iter().filter(|o| !o.visible_classes.is_empty()).count();
    Ok(MetricReport {
        challenge_iou: challenge,
        iou,
        mciou,
        per_class,
        frames_evaluated,
    })
}

/// Inputs of one ablation sweep.
#[derive(Clone, Debug)]
pub struct AblationSpec {
    pub scenarios: Vec<(String, ScenarioScript)>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub bank: BankConfig,
    pub proposer: ProposerParams,
}

impl AblationSpec {
    /// All builtin scenarios, seeds 0..n, all four policies, defaults.
    pub fn builtin(seed_count: u64) -> Self {
        AblationSpec {
            scenarios: crate::synth::builtin_scenarios().into_iter().collect(),
            seeds: (0..seed_count).collect(),
            policies: PolicyKind::ALL.to_vec(),
            bank: BankConfig::default(),
            proposer: ProposerParams::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub policy: PolicyKind,
    pub scenario: String,
    pub seed: u64,
    #[serde(flatten)]
    pub report: MetricReport,
}

/// Per-cell reports plus per-scenario and aggregate means.
#[derive(Clone, Debug)]
pub struct AblationTable {
    /// Ordered by (policy name, scenario, seed), the CSV row order.
    pub cells: Vec<CellReport>,
    pub per_scenario: BTreeMap<String, BTreeMap<PolicyKind, MetricReport>>,
    pub aggregate: BTreeMap<PolicyKind, MetricReport>,
}

/// Unweighted mean of reports. Per-class values average over the reports
/// containing that class, and the aggregate mcIoU is the mean of those
/// aggregated per-class values so the report invariant holds.
fn mean_reports(reports: &[&MetricReport]) -> MetricReport {
    debug_assert!(!reports.is_empty());
    let n = reports.len() as f64;
    let challenge = reports.iter().map(|r| r.challenge_iou).sum::<f64>() / n;
    let iou = reports.iter().map(|r| r.iou).sum::<f64>() / n;
    let mut per_class: BTreeMap<ClassId, (f64, usize)> = BTreeMap::new();
    for report in reports {
        for (&class, &value) in &report.per_class {
            let slot = per_class.entry(class).or_insert((0.0, 0));
            slot.0 += value;
            slot.1 += 1;
        }
    }
    let per_class: BTreeMap<ClassId, f64> = per_class
        .into_iter()
        .map(|(class, (sum, count))| (class, sum / count as f64))
        .collect();
    let mciou = per_class.values().sum::<f64>() / per_class.len().max(1) as f64;
    MetricReport {
        challenge_iou: challenge,
        iou,
        mciou,
        per_class,
        frames_evaluated: reports.iter().map(|r| r.frames_evaluated).sum(),
    }
}

/// Run the full (policy × scenario × seed) grid with paired per-frame noise
/// streams and aggregate by unweighted mean over (scenario, seed).
pub fn run_ablation(spec: &AblationSpec, jobs: usize) -> Result<AblationTable> {
    if spec.scenarios.is_empty() || spec.seeds.is_empty() || spec.policies.is_empty() {
        return Err(Error::InvalidScript(
            "ablation needs at least one scenario, seed, and policy".into(),
        ));
    }
    spec.bank.validate()?;
    spec.proposer.validate()?;

    let mut rendered: Vec<(String, Vec<FrameObservation>, Prompt)> = Vec::new();
    for (name, script) in &spec.scenarios {
        let frames = render_scenario(script)?;
        let prompt = Prompt::from_observations(&frames)?;
        rendered.push((name.clone(), frames, prompt));
    }

    let mut cell_specs: Vec<(PolicyKind, usize, u64)> = Vec::new();
    for policy in &spec.policies {
        for (idx, _) in rendered.iter().enumerate() {
            for &seed in &spec.seeds {
                cell_specs.push((*policy, idx, seed));
            }
        }
    }
    cell_specs.sort_by(|a, b| {
        (a.0.name(), &rendered[a.1].0, a.2).cmp(&(b.0.name(), &rendered[b.1].0, b.2))
    });

    let rendered_ref = &rendered;
    let bank = &spec.bank;
    let proposer_params = &spec.proposer;
    let results: Vec<Result<CellReport>> = crate::par::with_jobs(jobs, move || {
        crate::par::map_ordered(cell_specs, move |(policy, idx, seed)| {
            let (name, frames, prompt) = &rendered_ref[idx];
            let cell = |e: Error| Error::AblationCell {
                policy: policy.name(),
                scenario: name.clone(),
                seed,
                source: Box::new(e),
            };
            let mut proposer = SyntheticProposer::new(proposer_params.clone()).map_err(cell)?;
            let result =
                run_sequence(frames, prompt, policy, bank, &mut proposer, seed).map_err(cell)?;
            let report = metric_report(&result, frames).map_err(cell)?;
            Ok(CellReport {
                policy,
                scenario: name.clone(),
                seed,
                report,
            })
        })
    });
    let cells: Vec<CellReport> = results.into_iter().collect::<Result<_>>()?;

    let mut per_scenario: BTreeMap<String, BTreeMap<PolicyKind, MetricReport>> = BTreeMap::new();
    let mut aggregate: BTreeMap<PolicyKind, MetricReport> = BTreeMap::new();
    for &policy in &spec.policies {
        for (name, _, _) in &rendered {
            let scoped: Vec<&MetricReport> = cells
                .iter()
                .filter(|c| c.policy == policy && &c.scenario == name)
                .map(|c| &c.report)
                .collect();
            per_scenario
                .entry(name.clone())
                .or_default()
                .insert(policy, mean_reports(&scoped));
        }
        let all: Vec<&MetricReport> = cells
            .iter()
            .filter(|c| c.policy == policy)
            .map(|c| &c.report)
            .collect();
        aggregate.insert(policy, mean_reports(&all));
    }

    Ok(AblationTable {
        cells,
        per_scenario,
        aggregate,
    })
}

/// CSV rows for the cells: `policy,scenario,seed,challenge_iou,iou,mciou`
/// with four decimals, ordered by (policy, scenario, seed).
pub fn cells_to_csv(cells: &[CellReport]) -> String {
    let mut rows: Vec<&CellReport> = cells.iter().collect();
    rows.sort_by(|a, b| {
        (a.policy.name(), &a.scenario, a.seed).cmp(&(b.policy.name(), &b.scenario, b.seed))
    });
    let mut out = String::from("policy,scenario,seed,challenge_iou,iou,mciou\n");
    for cell in rows {
        writeln!(
            out,
            "{},{},{},{:.4},{:.4},{:.4}",
            cell.policy.name(),
            cell.scenario,
            cell.seed,
            cell.report.challenge_iou,
            cell.report.iou,
            cell.report.mciou
        )
        .expect("write to string");
    }
    out
}

/// Aggregate challenge-IoU ordering over the four policies, with the
/// baseline-to-full margin.
#[derive(Clone, Debug)]
pub struct OrderingCheck {
    pub pass: bool,
    pub challenge: BTreeMap<PolicyKind, f64>,
    pub margin: f64,
}

pub const ORDERING_MIN_MARGIN: f64 = 3.0;

/// `None` if the table lacks one of the four policies.
pub fn check_ablation_ordering(table: &AblationTable) -> Option<OrderingCheck> {
    let mut challenge = BTreeMap::new();
    for policy in PolicyKind::ALL {
        challenge.insert(policy, table.aggregate.get(&policy)?.challenge_iou);
    }
    let fifo = challenge[&PolicyKind::Fifo];
    let cam = challenge[&PolicyKind::CamOnly];
    let orm = challenge[&PolicyKind::OrmOnly];
    let ma = challenge[&PolicyKind::MaSam2];
    let margin = ma - fifo;
    let pass = fifo <= cam && cam <= orm && orm <= ma && margin >= ORDERING_MIN_MARGIN;
    Some(OrderingCheck {
        pass,
        challenge,
        margin,
    })
}

/// Plain-text aggregate table, one row per policy.
pub fn format_ablation_table(table: &AblationTable) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<14} {:>14} {:>10} {:>10}",
        "method", "challenge_iou", "iou", "mciou"
    )
    .unwrap();
    for policy in PolicyKind::ALL {
        if let Some(report) = table.aggregate.get(&policy) {
            writeln!(
                out,
                "{:<14} {:>14.2} {:>10.2} {:>10.2}",
                policy.table_label(),
                report.challenge_iou,
                report.iou,
                report.mciou
            )
            .unwrap();
        }
    }
    if let Some(check) = check_ablation_ordering(table) {
        writeln!(
            out,
            "ordering check: {} (fifo {:.2} <= cam {:.2} <= orm {:.2} <= ma {:.2}, margin {:.2} >= {:.1})",
            if check.pass { "PASS" } else { "FAIL" },
            check.challenge[&PolicyKind::Fifo],
            check.challenge[&PolicyKind::CamOnly],
            check.challenge[&PolicyKind::OrmOnly],
            check.challenge[&PolicyKind::MaSam2],
            check.margin,
            ORDERING_MIN_MARGIN,
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::ScoreState;
    use crate::tracker::{FrameRecord, StoreStats};
    use approx::assert_abs_diff_eq;

    fn obs(frame: usize, masks: Vec<(u32, BinaryMask)>) -> FrameObservation {
        let gt_masks: BTreeMap<ClassId, BinaryMask> =
            masks.into_iter().map(|(c, m)| (ClassId(c), m)).collect();
        let visible_classes = gt_masks
            .iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, _)| *c)
            .collect();
        FrameObservation {
            frame_index: frame,
            gt_masks,
            visible_classes,
        }
    }

    fn result_from_masks(frames: Vec<Vec<(u32, BinaryMask)>>) -> TrackResult {
        let records = frames
            .into_iter()
            .enumerate()
            .map(|(t, masks)| FrameRecord {
                frame_index: t,
                branch: 0,
                verdict: None,
                context_frames: vec![],
                masks: masks.into_iter().map(|(c, m)| (ClassId(c), m)).collect(),
            })
            .collect();
        TrackResult {
            policy: PolicyKind::Fifo,
            seed: 0,
            frames: records,
            final_scores: ScoreState::new(1e-6),
            stats: StoreStats::default(),
            bank_trace: vec![],
        }
    }

    fn rect(w: usize, h: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |r, c| r >= r0 && r <= r1 && c >= c0 && c <= c1)
    }

    #[test]
    fn class_iou_accumulation_fixture() {
        // 2 frames: intersections (4, 0), unions (12, 8) → 4/20
        let gt = vec![rect(8, 8, 0, 0, 1, 3), rect(8, 8, 0, 0, 1, 3)];
        let pred = vec![rect(8, 8, 0, 0, 3, 1), BinaryMask::new(8, 8)];
        assert_eq!(
            gt[0].intersection_count(&pred[0]).unwrap(),
            4
        );
        let got = class_iou(&pred, &gt).unwrap().unwrap();
        assert_abs_diff_eq!(got, 4.0 / 20.0, epsilon = 1e-15);
    }

    #[test]
    fn class_iou_edge_cases() {
        let gt = vec![rect(4, 4, 0, 0, 1, 1)];
        assert_eq!(class_iou(&gt, &gt).unwrap(), Some(1.0));
        let empty = vec![BinaryMask::new(4, 4)];
        assert_eq!(class_iou(&empty, &gt).unwrap(), Some(0.0));
        assert_eq!(class_iou(&empty, &empty).unwrap(), None);
        assert!(matches!(
            class_iou(&gt, &[]),
            Err(Error::LengthMismatch(1, 0))
        ));
    }

    #[test]
    fn challenge_iou_fixture_62_5() {
        // frame 1: A iou 1.0, B iou 0.5 → 0.75; frame 2: A iou 0.5 → 0.5
        let a1 = rect(8, 8, 0, 0, 1, 1);
        let b1 = rect(8, 8, 4, 4, 5, 5);
        let b1_pred = rect(8, 8, 4, 4, 4, 5); // half of gt
        let a2 = rect(8, 8, 0, 0, 1, 1);
        let a2_pred = rect(8, 8, 0, 0, 0, 1);
        let gt = vec![
            obs(0, vec![(1, a1.clone()), (2, b1)]),
            obs(1, vec![(1, a2), (2, BinaryMask::new(8, 8))]),
        ];
        let result = result_from_masks(vec![vec![(1, a1), (2, b1_pred)], vec![(1, a2_pred)]]);
        let got = challenge_iou(&result, &gt).unwrap();
        assert_abs_diff_eq!(got, 62.5, epsilon = 1e-9);
    }

    #[test]
    fn perfect_prediction_scores_100() {
        let m1 = rect(8, 8, 0, 0, 2, 2);
        let m2 = rect(8, 8, 5, 5, 7, 7);
        let gt = vec![
            obs(0, vec![(1, m1.clone()), (2, m2.clone())]),
            obs(1, vec![(1, m1.clone()), (2, m2.clone())]),
        ];
        let result = result_from_masks(vec![
            vec![(1, m1.clone()), (2, m2.clone())],
            vec![(1, m1), (2, m2)],
        ]);
        assert_eq!(challenge_iou(&result, &gt).unwrap(), 100.0);
        assert_eq!(iou_metric(&result, &gt).unwrap(), 100.0);
        assert_eq!(mciou(&result, &gt).unwrap(), 100.0);
    }

    #[test]
    fn all_empty_predictions_score_zero() {
        let gt = vec![obs(0, vec![(1, rect(8, 8, 0, 0, 2, 2))])];
        let result = result_from_masks(vec![vec![]]);
        assert_eq!(challenge_iou(&result, &gt).unwrap(), 0.0);
    }

    #[test]
    fn no_evaluable_frames_errors() {
        let gt = vec![obs(0, vec![(1, BinaryMask::new(8, 8))])];
        let result = result_from_masks(vec![vec![]]);
        assert!(matches!(
            challenge_iou(&result, &gt),
            Err(Error::NoEvaluableFrames)
        ));
    }

    #[test]
    fn hallucination_penalizes_iou_metric_only() {
        let m1 = rect(8, 8, 0, 0, 2, 2);
        let gt = vec![obs(0, vec![(1, m1.clone())])];
        // predicts class 2 where gt has none
        let result = result_from_masks(vec![vec![(1, m1.clone()), (2, rect(8, 8, 5, 5, 6, 6))]]);
        let challenge = challenge_iou(&result, &gt).unwrap();
        let penalized = iou_metric(&result, &gt).unwrap();
        assert_eq!(challenge, 100.0);
        assert!(penalized < challenge);
        assert_abs_diff_eq!(penalized, 50.0, epsilon = 1e-9);

        // without hallucination the two metrics coincide
        let clean = result_from_masks(vec![vec![(1, m1)]]);
        assert_eq!(
            challenge_iou(&clean, &gt).unwrap(),
            iou_metric(&clean, &gt).unwrap()
        );
    }

    #[test]
    fn challenge_never_below_penalized_iou() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let rand_mask = |rng: &mut rand_chacha::ChaCha8Rng| {
                let density = rng.random_range(0.0..0.4);
                BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(density))
            };
            let gt: Vec<FrameObservation> = (0..3)
                .map(|t| obs(t, vec![(1, rand_mask(&mut rng)), (2, rand_mask(&mut rng))]))
                .collect();
            if gt.iter().all(|o| o.visible_classes.is_empty()) {
                continue;
            }
            let result = result_from_masks(
                (0..3)
                    .map(|_| vec![(1, rand_mask(&mut rng)), (2, rand_mask(&mut rng))])
                    .collect(),
            );
            let c = challenge_iou(&result, &gt).unwrap();
            let i = iou_metric(&result, &gt).unwrap();
            assert!(c >= i - 1e-9, "challenge {c} < iou {i}");
        }
    }

    #[test]
    fn mciou_mean_and_relabel_invariance() {
        let m1 = rect(8, 8, 0, 0, 1, 1);
        let m1_half = rect(8, 8, 0, 0, 0, 1);
        let m2 = rect(8, 8, 4, 4, 5, 5);
        let gt = vec![obs(0, vec![(1, m1.clone()), (2, m2.clone())])];
        let result = result_from_masks(vec![vec![(1, m1_half.clone()), (2, m2.clone())]]);
        let report = metric_report(&result, &gt).unwrap();
        assert_abs_diff_eq!(report.mciou, (50.0 + 100.0) / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            report.mciou,
            report.per_class.values().sum::<f64>() / report.per_class.len() as f64,
            epsilon = 1e-12
        );

        // bijective relabeling 1→7, 2→9 changes nothing
        let gt2 = vec![obs(0, vec![(7, m1), (9, m2.clone())])];
        let result2 = result_from_masks(vec![vec![(7, m1_half), (9, m2)]]);
        let report2 = metric_report(&result2, &gt2).unwrap();
        assert_eq!(report.challenge_iou, report2.challenge_iou);
        assert_eq!(report.iou, report2.iou);
        assert_eq!(report.mciou, report2.mciou);
    }

    #[test]
    fn single_class_mciou_equals_class_iou() {
        let m1 = rect(8, 8, 0, 0, 1, 1);
        let m1_half = rect(8, 8, 0, 0, 0, 1);
        let gt = vec![obs(0, vec![(1, m1.clone())])];
        let result = result_from_masks(vec![vec![(1, m1_half.clone())]]);
        let report = metric_report(&result, &gt).unwrap();
        let acc = class_iou(&[m1_half], &[m1]).unwrap().unwrap();
        assert_abs_diff_eq!(report.mciou, 100.0 * acc, epsilon = 1e-12);
    }

    #[test]
    fn concatenation_matches_weighted_combination() {
        // challenge: mean over evaluated frames — concatenation of two
        // sequences must equal the frame-count weighted mean.
        let m = rect(8, 8, 0, 0, 1, 1);
        let half = rect(8, 8, 0, 0, 0, 1);
        let gt_a = vec![obs(0, vec![(1, m.clone())])];
        let pred_a = vec![vec![(1, m.clone())]];
        let gt_b = vec![
            obs(0, vec![(1, m.clone())]),
            obs(1, vec![(1, m.clone())]),
        ];
        let pred_b = vec![vec![(1, half.clone())], vec![(1, half.clone())]];

        let ca = challenge_iou(&result_from_masks(pred_a.clone()), &gt_a).unwrap();
        let cb = challenge_iou(&result_from_masks(pred_b.clone()), &gt_b).unwrap();

        let mut gt_all = gt_a;
        gt_all.extend(gt_b.into_iter().enumerate().map(|(i, mut o)| {
            o.frame_index = 1 + i;
            o
        }));
        let mut pred_all = pred_a;
        pred_all.extend(pred_b);
        let call = challenge_iou(&result_from_masks(pred_all), &gt_all).unwrap();
        assert_abs_diff_eq!(call, (ca * 1.0 + cb * 2.0) / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn ablation_single_cell_and_permutation_invariance() {
        let mut spec = AblationSpec::builtin(1);
        spec.scenarios.retain(|(name, _)| name == "reappearance");
        spec.seeds = vec![3];
        let table = run_ablation(&spec, 1).unwrap();
        assert_eq!(table.cells.len(), 4);
        for cell in &table.cells {
            let aggregate = &table.aggregate[&cell.policy];
            assert_eq!(aggregate.challenge_iou, cell.report.challenge_iou);
            assert_eq!(aggregate.mciou, cell.report.mciou);
        }

        let mut spec_fwd = spec.clone();
        spec_fwd.seeds = vec![1, 2];
        spec_fwd.policies = vec![PolicyKind::Fifo];
        let fwd = run_ablation(&spec_fwd, 1).unwrap();
        let mut spec_rev = spec_fwd.clone();
        spec_rev.seeds = vec![2, 1];
        let rev = run_ablation(&spec_rev, 1).unwrap();
        assert_eq!(
            fwd.aggregate[&PolicyKind::Fifo].challenge_iou,
            rev.aggregate[&PolicyKind::Fifo].challenge_iou
        );
    }

    #[test]
    fn csv_order_and_format() {
        let report = MetricReport {
            challenge_iou: 61.23456,
            iou: 60.0,
            mciou: 59.5,
            per_class: BTreeMap::new(),
            frames_evaluated: 10,
        };
        let cells = vec![
            CellReport {
                policy: PolicyKind::OrmOnly,
                scenario: "b".into(),
                seed: 1,
                report: report.clone(),
            },
            CellReport {
                policy: PolicyKind::Fifo,
                scenario: "a".into(),
                seed: 0,
                report,
            },
        ];
        let csv = cells_to_csv(&cells);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "policy,scenario,seed,challenge_iou,iou,mciou");
        assert_eq!(lines[1], "fifo,a,0,61.2346,60.0000,59.5000");
        assert_eq!(lines[2], "orm,b,1,61.2346,60.0000,59.5000");
    }
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use memtrack_core::hypothesis::ScoreState;
use memtrack_core::mask::{rle_decode, rle_encode, RleMask};
use memtrack_core::memory::BankConfig;
use memtrack_core::metrics::{
    cells_to_csv, format_ablation_table, metric_report, run_ablation, AblationSpec, CellReport,
    MetricReport,
};
use memtrack_core::synth::{
    builtin_scenarios, render_scenario, FrameObservation, ProposerParams, ScenarioScript,
    SyntheticProposer,
};
use memtrack_core::tracker::{
    run_sequence, FrameRecord, PolicyKind, Prompt, StoreStats, TrackResult,
};
use memtrack_core::ClassId;

use crate::config::{parse_json_strict, AblateConfig, CliError, CliResult, RunConfig};

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    config_sha256: String,
}

fn jsonl_header(hash: &str) -> String {
    serde_json::to_string(&JsonlHeader {
        config_sha256: hash.to_string(),
    })
    .expect("header serializes")
}

/// Resolve a builtin name or a script path.
fn resolve_scenario(spec: &str) -> CliResult<(String, ScenarioScript)> {
    let builtins = builtin_scenarios();
    if let Some(script) = builtins.get(spec) {
        return Ok((spec.to_string(), script.clone()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::user(format!(
            "scenario '{spec}' is neither a builtin ({}) nor an existing file",
            builtins.keys().cloned().collect::<Vec<_>>().join(", ")
        )));
    }
    let text = fs::read_to_string(path)?;
    let script: ScenarioScript = parse_json_strict(&text, &format!("script {spec}"))?;
    script.validate()?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string());
    Ok((name, script))
}

/// Hash of the effective run inputs, embedded in every output header line.
fn effective_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

#[derive(Serialize)]
struct GtLine {
    frame: usize,
    masks: BTreeMap<String, String>,
}

pub fn render(script_spec: &str, out_dir: &Path) -> CliResult<()> {
    let (name, script) = resolve_scenario(script_spec)?;
    let hash = effective_hash(&script);
    let frames = render_scenario(&script)?;
    fs::create_dir_all(out_dir)?;
    let mut out = jsonl_header(&hash);
    out.push('\n');
    for obs in &frames {
        let masks = obs
            .gt_masks
            .iter()
            .map(|(class, mask)| (class.to_string(), rle_encode(mask).to_text_line()))
            .collect();
        out.push_str(
            &serde_json::to_string(&GtLine {
                frame: obs.frame_index,
                masks,
            })
            .expect("gt line serializes"),
        );
        out.push('\n');
    }
    let path = out_dir.join("gt.jsonl");
    fs::write(&path, out)?;
    log::info!("rendered {} frames of '{name}'", frames.len());
    println!("wrote {} ({} frames)", path.display(), frames.len());
    Ok(())
}

#[derive(Serialize)]
struct EffectiveRunConfig<'a> {
    scenario: &'a ScenarioScript,
    scenario_name: &'a str,
    policy: &'a str,
    seed: u64,
    bank: &'a BankConfig,
    proposer: &'a ProposerParams,
}

#[derive(Serialize)]
struct BankTraceLine<'a> {
    frame: usize,
    #[serde(flatten)]
    state: &'a memtrack_core::memory::BankState,
}

pub fn run(
    config_path: &Path,
    seed_override: Option<u64>,
    policy_override: Option<&str>,
    out_override: Option<&Path>,
) -> CliResult<()> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::user(format!("config {}: {e}", config_path.display())))?;
    let mut cfg: RunConfig = parse_json_strict(&text, "config")?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(policy) = policy_override {
        cfg.policy = policy.to_string();
    }
    let out_dir = out_override.unwrap_or(&cfg.out_dir).to_path_buf();

    let policy: PolicyKind = cfg.policy.parse()?;
    let (scenario_name, script) = resolve_scenario(&cfg.scenario)?;
    let hash = effective_hash(&EffectiveRunConfig {
        scenario: &script,
        scenario_name: &scenario_name,
        policy: policy.name(),
        seed: cfg.seed,
        bank: &cfg.bank,
        proposer: &cfg.proposer,
    });

    let frames = render_scenario(&script)?;
    let prompt = Prompt::from_observations(&frames)?;
    let mut proposer = SyntheticProposer::new(cfg.proposer.clone())?;
    let result = run_sequence(&frames, &prompt, policy, &cfg.bank, &mut proposer, cfg.seed)?;
    let report = metric_report(&result, &frames)?;

    fs::create_dir_all(&out_dir)?;

    let mut result_text = jsonl_header(&hash);
    result_text.push('\n');
    result_text.push_str(&result.to_jsonl());
    fs::write(out_dir.join("result.jsonl"), result_text)?;

    let cell = CellReport {
        policy,
        scenario: scenario_name.clone(),
        seed: cfg.seed,
        report: report.clone(),
    };
    let csv = format!("# config_sha256={hash}\n{}", cells_to_csv(&[cell]));
    fs::write(out_dir.join("metrics.csv"), csv)?;

    let mut trace_text = jsonl_header(&hash);
    trace_text.push('\n');
    for (frame, state) in result.bank_trace.iter().enumerate() {
        trace_text.push_str(
            &serde_json::to_string(&BankTraceLine { frame, state }).expect("trace serializes"),
        );
        trace_text.push('\n');
    }
    fs::write(out_dir.join("bank_trace.jsonl"), trace_text)?;

    println!(
        "{} on {} (seed {}): challenge_iou {:.2}, iou {:.2}, mciou {:.2}",
        policy.name(),
        scenario_name,
        cfg.seed,
        report.challenge_iou,
        report.iou,
        report.mciou
    );
    Ok(())
}

#[derive(Serialize)]
struct EffectiveAblateConfig<'a> {
    scenarios: Vec<(&'a str, &'a ScenarioScript)>,
    policies: Vec<&'a str>,
    seeds: &'a [u64],
    bank: &'a BankConfig,
    proposer: &'a ProposerParams,
}

pub fn ablate(config_path: &Path, jobs: usize, out_override: Option<&Path>) -> CliResult<()> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::user(format!("config {}: {e}", config_path.display())))?;
    let cfg: AblateConfig = parse_json_strict(&text, "config")?;
    let out_dir = out_override.unwrap_or(&cfg.out_dir).to_path_buf();

    let mut scenarios = Vec::new();
    for spec in &cfg.scenarios {
        scenarios.push(resolve_scenario(spec)?);
    }
    let mut policies = Vec::new();
    for name in &cfg.policies {
        policies.push(name.parse::<PolicyKind>()?);
    }
    let hash = effective_hash(&EffectiveAblateConfig {
        scenarios: scenarios
            .iter()
            .map(|(name, script)| (name.as_str(), script))
            .collect(),
        policies: policies.iter().map(|p| p.name()).collect(),
        seeds: &cfg.seeds,
        bank: &cfg.bank,
        proposer: &cfg.proposer,
    });

    let spec = AblationSpec {
        scenarios,
        seeds: cfg.seeds.clone(),
        policies,
        bank: cfg.bank.clone(),
        proposer: cfg.proposer.clone(),
    };
    let table = run_ablation(&spec, jobs)?;

    fs::create_dir_all(&out_dir)?;
    let csv = format!("# config_sha256={hash}\n{}", cells_to_csv(&table.cells));
    fs::write(out_dir.join("cells.csv"), csv)?;

    let aggregate: BTreeMap<&str, &MetricReport> = table
        .aggregate
        .iter()
        .map(|(policy, report)| (policy.name(), report))
        .collect();
    let mut aggregate_json = serde_json::to_string_pretty(&serde_json::json!({
        "config_sha256": hash,
        "aggregate": aggregate,
    }))
    .expect("aggregate serializes");
    aggregate_json.push('\n');
    fs::write(out_dir.join("aggregate.json"), aggregate_json)?;

    let rendered = format!("# config_sha256={hash}\n{}", format_ablation_table(&table));
    fs::write(out_dir.join("table.txt"), &rendered)?;
    print!("{rendered}");
    Ok(())
}

#[derive(Deserialize)]
struct ResultLine {
    frame: usize,
    branch: usize,
    #[serde(default)]
    #[allow(dead_code)]
    verdict: Option<String>,
    #[serde(default)]
    context: Vec<usize>,
    masks: BTreeMap<String, String>,
}

fn parse_masks(masks: &BTreeMap<String, String>, what: &str) -> CliResult<BTreeMap<ClassId, memtrack_core::mask::BinaryMask>> {
    let mut out = BTreeMap::new();
    for (key, line) in masks {
        let class: u32 = key
            .parse()
            .map_err(|_| CliError::user(format!("{what}: bad class id '{key}'")))?;
        let rle = RleMask::from_text_line(line)?;
        out.insert(ClassId(class), rle_decode(&rle)?);
    }
    Ok(out)
}

fn read_jsonl(path: &Path) -> CliResult<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(first) if first.contains("config_sha256") => {}
        Some(_) | None => {
            return Err(CliError::user(format!(
                "{}: missing config_sha256 header line",
                path.display()
            )))
        }
    }
    Ok(lines.map(str::to_string).collect())
}

pub fn eval(result_path: &Path, gt_path: &Path, out: Option<&Path>) -> CliResult<()> {
    let gt_lines = read_jsonl(gt_path)?;
    let mut gt_frames = Vec::new();
    for (i, line) in gt_lines.iter().enumerate() {
        let parsed: GtLineIn = parse_json_strict(line, &format!("gt line {}", i + 2))?;
        let gt_masks = parse_masks(&parsed.masks, &format!("gt frame {}", parsed.frame))?;
        let visible_classes: BTreeSet<ClassId> = gt_masks
            .iter()
            .filter(|(_, m)| !m.is_empty())
            .map(|(c, _)| *c)
            .collect();
        gt_frames.push(FrameObservation {
            frame_index: parsed.frame,
            gt_masks,
            visible_classes,
        });
    }

    let result_lines = read_jsonl(result_path)?;
    let mut records = Vec::new();
    for (i, line) in result_lines.iter().enumerate() {
        let parsed: ResultLine = parse_json_strict(line, &format!("result line {}", i + 2))?;
        records.push(FrameRecord {
            frame_index: parsed.frame,
            branch: parsed.branch,
            verdict: None,
            context_frames: parsed.context,
            masks: parse_masks(&parsed.masks, &format!("result frame {}", parsed.frame))?,
        });
    }
    let result = TrackResult {
        policy: PolicyKind::Fifo,
        seed: 0,
        frames: records,
        final_scores: ScoreState::new(1e-6),
        stats: StoreStats::default(),
        bank_trace: Vec::new(),
    };

    let report = metric_report(&result, &gt_frames)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match out {
        Some(path) => fs::write(path, &json)?,
        None => print!("{json}"),
    }
    println!(
        "challenge_iou {:.4}, iou {:.4}, mciou {:.4} over {} frames",
        report.challenge_iou, report.iou, report.mciou, report.frames_evaluated
    );
    Ok(())
}

#[derive(Deserialize)]
struct GtLineIn {
    frame: usize,
    masks: BTreeMap<String, String>,
}

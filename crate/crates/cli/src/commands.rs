//! Subcommand implementations. Each returns `Err(CliError::Usage)` for bad
//! input (exit 2) and `Err(CliError::Runtime)` for failures while running
//! (exit 1).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use rova_core::corruption::{apply_corruption, generate_mask, regenerate, PerturbationSpec};
use rova_core::cost::{reference_checks, report, sweep, to_seconds, CostProfile};
use rova_core::curriculum::sim::{
    parse_stream, rho_csv, simulate, synthetic_stream, windows_csv, write_stream, SimConfig, SyntheticStream,
};
use rova_core::frame_store::{read_sequence, write_mask, write_sequence};
use rova_core::judge::{JudgeInputs, JudgeKind};
use rova_core::pipeline::{run_toy, PipelineConfig, PipelineEvent, PipelineSummary};

use crate::config::RunConfig;
use crate::metrics::{MetricsRecord, MetricsWriter};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Hex SHA-256 of a byte payload; used as the video id.
pub fn content_id(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar path for a corrupted output: `<output>.spec.json`.
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".spec.json");
    PathBuf::from(name)
}

fn require_input(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input not found: {}", path.display())))
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub struct CorruptArgs<'a> {
    pub input: &'a Path,
    pub output: &'a Path,
    pub mask_output: Option<&'a Path>,
}

/// Corrupts one video, writing the result and its spec sidecar.
pub fn cmd_corrupt(cfg: &RunConfig, args: &CorruptArgs<'_>) -> CliResult<PerturbationSpec> {
    require_input(args.input)?;
    let clean = read_sequence(args.input).map_err(|e| usage(format!("{}: {e}", args.input.display())))?;
    let video_id = content_id(clean.as_bytes());
    let corruptor = cfg.corruption.corruptor();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.corruption.seed);
    let (t, h, w) = clean.shape();
    let spec = corruptor
        .make_spec(&video_id, [t, h, w], &mut rng)
        .map_err(|e| usage(e.to_string()))?;
    let out = apply_corruption(&clean, &spec, spec.blend).map_err(anyhow::Error::from)?;
    ensure_parent(args.output)?;
    write_sequence(&out, args.output).map_err(anyhow::Error::from)?;
    let sidecar = sidecar_path(args.output);
    fs::write(&sidecar, spec.to_json()).with_context(|| format!("writing {}", sidecar.display()))?;
    if let Some(mask_path) = args.mask_output {
        let mask = generate_mask(&spec).map_err(anyhow::Error::from)?;
        ensure_parent(mask_path)?;
        write_mask(&mask, mask_path).map_err(anyhow::Error::from)?;
    }
    log::info!("{} -> {} ({}, seed {})", args.input.display(), args.output.display(), spec.style, spec.seed);
    Ok(spec)
}

/// Regenerates a corrupted video from its clean source and spec.
pub fn cmd_regen(spec_path: &Path, input: &Path, output: &Path) -> CliResult {
    require_input(spec_path)?;
    require_input(input)?;
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = PerturbationSpec::from_json(&text).map_err(|e| usage(format!("{}: {e}", spec_path.display())))?;
    let clean = read_sequence(input).map_err(|e| usage(format!("{}: {e}", input.display())))?;
    let out = regenerate(&spec, &clean).map_err(|e| usage(e.to_string()))?;
    ensure_parent(output)?;
    write_sequence(&out, output).map_err(anyhow::Error::from)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    mode: String,
    #[serde(flatten)]
    summary: Option<&'a PipelineSummary>,
}

fn train_record(event: &PipelineEvent<'_>) -> MetricsRecord {
    match *event {
        PipelineEvent::Train { step, metrics, counts, rho, buffer_len } => {
            let mut r = MetricsRecord::new(step, "train")
                .with("mean_reward", metrics.mean_reward)
                .with("mean_advantage_abs", metrics.mean_advantage_abs)
                .with("kl", metrics.kl)
                .with("objective", metrics.objective)
                .with("accuracy_clean", metrics.clean_accuracy)
                .with("accuracy_pert", metrics.perturbed_accuracy)
                .with("alignment_mean", metrics.mean_alignment)
                .with("grad_norm", metrics.grad_norm)
                .with("groups", metrics.groups as f64)
                .with("arrivals", counts.arrivals as f64)
                .with("discarded", counts.discarded as f64)
                .with("deferred", counts.deferred as f64)
                .with("trained", counts.trained as f64)
                .with("promoted", counts.promoted as f64)
                .with("evicted", counts.evicted as f64)
                .with("buffer_len", buffer_len as f64);
            if let Some(rho) = rho {
                r = r.with("rho", rho);
            }
            r
        }
        PipelineEvent::Eval { step, eval } => MetricsRecord::new(step, "eval")
            .with("accuracy_clean", eval.clean_accuracy)
            .with("accuracy_pert", eval.perturbed_accuracy),
        PipelineEvent::Reeval { step, promoted, evicted, unassessed } => MetricsRecord::new(step, "reeval")
            .with("promoted", promoted as f64)
            .with("evicted", evicted as f64)
            .with("unassessed", unassessed as f64),
    }
}

/// Runs the toy training loop; writes metrics JSONL and a summary JSON in
/// `io.out_dir`. Returns the summary.
pub fn cmd_train_toy(cfg: &RunConfig) -> CliResult<PipelineSummary> {
    let out_dir = &cfg.io.out_dir;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let judge = cfg.judge.build().map_err(|e| usage(format!("{e:#}")))?;
    let mode = cfg.curriculum.resolved_mode(cfg.judge.is_remote());
    let pipeline = PipelineConfig {
        grpo: cfg.grpo.clone(),
        reward: cfg.reward,
        curriculum: cfg.curriculum.clone(),
        mode,
        target_accuracy: 0.9,
    };
    let metrics_path = out_dir.join(&cfg.io.metrics_file);
    let mut writer = MetricsWriter::create(&metrics_path, cfg.io.record_wall_clock)?;
    let mut write_error: Option<anyhow::Error> = None;
    let result = run_toy(&pipeline, judge.as_ref(), |event| {
        if write_error.is_none() {
            if let Err(e) = writer.write(train_record(&event)) {
                write_error = Some(e);
            }
        }
    });
    let summary_path = out_dir.join(&cfg.io.summary_file);
    let mode_name = serde_json::to_value(mode)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    let write_summary = |doc: &RunSummary<'_>| -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(doc)?;
        fs::write(&summary_path, text + "\n").with_context(|| format!("writing {}", summary_path.display()))
    };
    match result {
        Ok(outcome) => {
            if let Some(e) = write_error {
                return Err(e.into());
            }
            write_summary(&RunSummary {
                status: "ok",
                error: None,
                mode: mode_name,
                summary: Some(&outcome.summary),
            })?;
            Ok(outcome.summary)
        }
        Err(e) => {
            write_summary(&RunSummary { status: "error", error: Some(e.to_string()), mode: mode_name, summary: None })?;
            Err(anyhow!(e).context("train-toy aborted; metrics written so far are kept").into())
        }
    }
}

pub struct SimArgs<'a> {
    pub stream: Option<&'a Path>,
    pub synthetic: SyntheticStream,
    pub emit_stream: Option<&'a Path>,
    pub window: u64,
}

#[derive(Debug, Serialize)]
pub struct SimSummary {
    pub arrivals: u64,
    pub rho_bar: Option<f64>,
    pub discard_rate: f64,
    pub defer_rate: f64,
    pub max_buffer_len: usize,
    pub final_buffer_len: usize,
    pub evicted_capacity: u64,
    pub evicted_easy: u64,
    pub evicted_counter: u64,
}

/// Replays a difficulty stream (from a file or synthesized) through the
/// curriculum state machine and writes rates, rho series and the buffer.
pub fn cmd_curriculum_sim(cfg: &RunConfig, args: &SimArgs<'_>) -> CliResult<SimSummary> {
    let arrivals = match args.stream {
        Some(path) => {
            require_input(path)?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_stream(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => synthetic_stream(&args.synthetic).map_err(|e| usage(e.to_string()))?,
    };
    if let Some(path) = args.emit_stream {
        ensure_parent(path)?;
        fs::write(path, write_stream(&arrivals)).with_context(|| format!("writing {}", path.display()))?;
    }
    let sim_cfg = SimConfig {
        curriculum: cfg.curriculum.clone(),
        window: args.window.max(1),
        corruptor: cfg.corruption.corruptor(),
        ..SimConfig::default()
    };
    let (report, buffer) = simulate(&arrivals, &sim_cfg).map_err(|e| usage(e.to_string()))?;
    let out_dir = &cfg.io.out_dir;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::write(out_dir.join("windows.csv"), windows_csv(&report.windows)).context("writing windows.csv")?;
    fs::write(out_dir.join("rho.csv"), rho_csv(&report.steps)).context("writing rho.csv")?;
    buffer.save(&out_dir.join("buffer.json")).map_err(anyhow::Error::from)?;
    let t = report.totals;
    let frac = |n: u64| if t.arrivals > 0 { n as f64 / t.arrivals as f64 } else { 0.0 };
    let summary = SimSummary {
        arrivals: t.arrivals,
        rho_bar: report.rho_bar,
        discard_rate: frac(t.discarded),
        defer_rate: frac(t.deferred),
        max_buffer_len: report.max_buffer_len,
        final_buffer_len: report.final_buffer_len,
        evicted_capacity: report.evicted_capacity,
        evicted_easy: report.evicted_easy,
        evicted_counter: report.evicted_counter,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n";
    fs::write(out_dir.join("sim_summary.json"), &text).context("writing sim_summary.json")?;
    Ok(summary)
}

pub struct CostArgs {
    pub json: bool,
    pub check_reference: bool,
    pub sweep_steps: usize,
    pub seconds_per_fwd: Option<f64>,
}

/// Renders the cost report. Returns the text to print and whether every
/// reference check passed (always true when checks are not requested).
pub fn cmd_cost(profile: &CostProfile, args: &CostArgs) -> CliResult<(String, bool)> {
    let rep = report(profile).map_err(|e| usage(e.to_string()))?;
    let rows = sweep(profile, args.sweep_steps).map_err(|e| usage(e.to_string()))?;
    let checks = if args.check_reference {
        reference_checks().map_err(anyhow::Error::from)?
    } else {
        Vec::new()
    };
    let all_pass = checks.iter().all(|c| c.pass);
    if args.json {
        let doc = serde_json::json!({ "report": rep, "sweep": rows, "checks": checks });
        return Ok((serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)? + "\n", all_pass));
    }
    let mut s = String::new();
    let p = &rep.profile;
    let _ = writeln!(
        s,
        "profile: N={} G_total={} c_bwd_factor={} c_judge={} c_api={} c_pert={} (included: {}) rho={}",
        p.batch_size, p.group_total, p.c_bwd_factor, p.c_judge, p.c_api, p.c_pert, p.include_pert, p.rho
    );
    let _ = writeln!(s, "cost_grpo (N G (1+b))          {:>10.4}", rep.grpo);
    let _ = writeln!(s, "per-sample naive               {:>10.4}", rep.per_sample.naive);
    let _ = writeln!(s, "per-sample rova                {:>10.4}", rep.per_sample.rova);
    let _ = writeln!(s, "per-sample ratio rova/naive    {:>10.4}", rep.per_sample.ratio);
    let _ = writeln!(s, "per-sample saving (margin)     {:>10.4}  saves={}", rep.per_sample.margin, rep.per_sample.saves);
    let _ = writeln!(s, "break-even rho                 {:>10.4}", rep.rho_threshold);
    let _ = writeln!(s, "speedup, per-sample form       {:>10.4}", rep.per_sample_speedup);
    let _ = writeln!(s, "speedup, 4/(2.4+2 rho) form    {:>10.4}", rep.approx_speedup);
    let _ = writeln!(s, "per-step naive (term by term)  {:>10.4}", rep.per_step.naive);
    let _ = writeln!(s, "per-step rova (term by term)   {:>10.4}  (re-eval step {:.4})", rep.per_step.rova, rep.per_step.rova_reeval_step);
    let _ = writeln!(s, "per-step ratio (term by term)  {:>10.4}", rep.per_step.ratio);
    let _ = writeln!(
        s,
        "amortized re-eval per step     {:>10.4}  share {:.3}%",
        rep.amortized_reeval.per_step,
        100.0 * rep.amortized_reeval.share
    );
    if let Some(spf) = args.seconds_per_fwd {
        let _ = writeln!(
            s,
            "seconds per sample: naive {:.3}, rova {:.3}",
            to_seconds(rep.per_sample.naive, spf),
            to_seconds(rep.per_sample.rova, spf)
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:>6} {:>10} {:>10} {:>8} {:>9} {:>9} {:>9}", "rho", "naive", "rova", "ratio", "margin", "approx", "per_step");
    for r in &rows {
        let _ = writeln!(
            s,
            "{:>6.2} {:>10.4} {:>10.4} {:>8.4} {:>9.4} {:>9.4} {:>9.4}",
            r.rho, r.naive, r.rova, r.ratio, r.margin, r.approx_speedup, r.per_step_ratio
        );
    }
    if !checks.is_empty() {
        let _ = writeln!(s);
        for c in &checks {
            let _ = writeln!(
                s,
                "{} {}: {:.4} (expected {} +/- {})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.expected,
                c.tolerance
            );
        }
    }
    Ok((s, all_pass))
}

/// Sends one answer-consistency request and returns the verdict text.
pub fn cmd_judge_ping(cfg: &RunConfig) -> CliResult<String> {
    let judge = cfg.judge.build().map_err(|e| usage(format!("{e:#}")))?;
    let verdict = judge
        .judge(JudgeKind::AnswerConsistency, &JudgeInputs::answers("A", "A"))
        .map_err(|e| anyhow!(e).context("judge ping failed"))?;
    Ok(format!("ok: {} score {} (raw: {})", verdict.kind(), verdict.score(), verdict.raw().trim()))
}

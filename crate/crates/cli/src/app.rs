//! Argument parsing and dispatch for the `rova` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use rova_core::corruption::CorruptionProtocol;
use rova_core::curriculum::sim::SyntheticStream;

use crate::commands::{
    cmd_corrupt, cmd_cost, cmd_curriculum_sim, cmd_judge_ping, cmd_regen, cmd_train_toy, CliError, CliResult,
    CorruptArgs, CostArgs, SimArgs,
};
use crate::config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "rova", version, about = "Robust video alignment toolkit")]
pub struct Cli {
    /// TOML run configuration; defaults apply to missing sections and keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corrupt a video (.rvf file or PNG frame directory) and write its spec sidecar.
    Corrupt(CorruptCmd),
    /// Rebuild a corrupted video from its clean source and spec JSON.
    Regen(RegenCmd),
    /// Run the full curriculum + dual-branch GRPO loop on the toy task.
    TrainToy(TrainToyCmd),
    /// Replay a difficulty stream through routing, memory and eviction.
    CurriculumSim(SimCmd),
    /// Print the analytic cost model and a training-ratio sweep.
    Cost(CostCmd),
    /// Send one request to the configured judge.
    JudgePing,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

#[derive(Debug, Args)]
pub struct CorruptCmd {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the binary/modulation mask container here.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Family weights "weather,lighting,camera,occlusion".
    #[arg(long, value_delimiter = ',')]
    pub style_weights: Option<Vec<f64>>,
    #[arg(long)]
    pub intensity: Option<f32>,
    #[arg(long, value_parser = parse_protocol)]
    pub protocol: Option<CorruptionProtocol>,
}

#[derive(Debug, Args)]
pub struct RegenCmd {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainToyCmd {
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimCmd {
    /// CSV stream `step,label,confidence[,query_id]`; synthesized when absent.
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 50)]
    pub per_step: u64,
    #[arg(long, default_value_t = 0.061)]
    pub easy_rate: f64,
    #[arg(long, default_value_t = 0.070)]
    pub defer_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub window: u64,
    /// Write the (possibly synthesized) stream to this file.
    #[arg(long)]
    pub emit_stream: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostCmd {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<f64>,
    #[arg(long)]
    pub group_total: Option<f64>,
    #[arg(long)]
    pub c_judge: Option<f64>,
    #[arg(long)]
    pub c_api: Option<f64>,
    #[arg(long)]
    pub c_bwd_factor: Option<f64>,
    #[arg(long)]
    pub include_pert: bool,
    #[arg(long)]
    pub json: bool,
    /// Assert the published reference values (0.950, 1.111, 2.344).
    #[arg(long)]
    pub check_reference: bool,
    #[arg(long, default_value_t = 10)]
    pub sweep_steps: usize,
    /// Convert C_fwd units to seconds with this scale.
    #[arg(long)]
    pub seconds_per_fwd: Option<f64>,
}

fn parse_protocol(s: &str) -> Result<CorruptionProtocol, String> {
    match s {
        "static" => Ok(CorruptionProtocol::Static),
        "dynamic" => Ok(CorruptionProtocol::Dynamic),
        other => Err(format!("unknown protocol {other:?} (expected static or dynamic)")),
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    RunConfig::load(cli.config.as_deref()).map_err(|e| CliError::Usage(format!("{e:#}")))
}

fn revalidate(cfg: RunConfig) -> CliResult<RunConfig> {
    cfg.validate().map_err(|e| CliError::Usage(format!("{e:#}")))?;
    Ok(cfg)
}

/// Runs the parsed command, printing results to stdout.
pub fn run(cli: Cli) -> CliResult {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Corrupt(c) => {
            if let Some(w) = c.style_weights {
                cfg.corruption.style_weights = w.try_into().map_err(|_| CliError::Usage("need 4 style weights".into()))?;
            }
            if let Some(i) = c.intensity {
                cfg.corruption.intensity = i;
            }
            if let Some(p) = c.protocol {
                cfg.corruption.protocol = p;
            }
            let cfg = revalidate(cfg)?;
            let args = CorruptArgs { input: &c.input, output: &c.output, mask_output: c.mask.as_deref() };
            let spec = cmd_corrupt(&cfg, &args)?;
            println!("{} seed={} -> {}", spec.style, spec.seed, c.output.display());
        }
        Command::Regen(c) => {
            cmd_regen(&c.spec, &c.input, &c.output)?;
            println!("regenerated {}", c.output.display());
        }
        Command::TrainToy(c) => {
            if let Some(s) = c.steps {
                cfg.grpo.steps = s;
            }
            if let Some(s) = c.seed {
                cfg.grpo.seed = s;
            }
            if let Some(d) = c.out_dir {
                cfg.io.out_dir = d;
            }
            if let Some(t) = c.tau {
                cfg.curriculum.tau = t;
            }
            let cfg = revalidate(cfg)?;
            let summary = cmd_train_toy(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
        }
        Command::CurriculumSim(c) => {
            if let Some(d) = c.out_dir {
                cfg.io.out_dir = d;
            }
            let cfg = revalidate(cfg)?;
            let synthetic = SyntheticStream {
                steps: c.steps,
                per_step: c.per_step,
                easy_discard_rate: c.easy_rate,
                defer_rate: c.defer_rate,
                tau: cfg.curriculum.tau,
                seed: c.seed,
            };
            let args = SimArgs {
                stream: c.stream.as_deref(),
                synthetic,
                emit_stream: c.emit_stream.as_deref(),
                window: c.window,
            };
            let summary = cmd_curriculum_sim(&cfg, &args)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
        }
        Command::Cost(c) => {
            let mut p = cfg.cost.clone();
            for (field, value) in [
                (&mut p.rho, c.rho),
                (&mut p.batch_size, c.batch_size),
                (&mut p.group_total, c.group_total),
                (&mut p.c_judge, c.c_judge),
                (&mut p.c_api, c.c_api),
                (&mut p.c_bwd_factor, c.c_bwd_factor),
            ] {
                if let Some(v) = value {
                    *field = v;
                }
            }
            p.include_pert |= c.include_pert;
            let args = CostArgs {
                json: c.json,
                check_reference: c.check_reference,
                sweep_steps: c.sweep_steps,
                seconds_per_fwd: c.seconds_per_fwd,
            };
            let (text, pass) = cmd_cost(&p, &args)?;
            print!("{text}");
            if !pass {
                return Err(anyhow::anyhow!("reference check failed").into());
            }
        }
        Command::JudgePing => println!("{}", cmd_judge_ping(&cfg)?),
        Command::ShowConfig => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}

//! Run configuration: one TOML document with a section per module.
//!
//! Every section rejects unknown keys and is validated against its module
//! when loaded. Environment variables `ROVA_<SECTION>_<FIELD>` override
//! file values; the value is parsed as a TOML literal and falls back to a
//! plain string (so `ROVA_GRPO_SEED=7` and `ROVA_JUDGE_MODEL=gpt-4o` both
//! work). `ROVA_JUDGE_API_KEY` is a credential, not a config field.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rova_core::corruption::{BlendMode, CorruptionProtocol, Corruptor};
use rova_core::cost::CostProfile;
use rova_core::curriculum::CurriculumConfig;
use rova_core::grpo::GrpoConfig;
use rova_core::judge::{Judge, JudgeEndpoint, RemoteJudge, StubJudge, API_KEY_ENV};
use rova_core::reward::RewardConfig;

pub const ENV_PREFIX: &str = "ROVA_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSection {
    pub protocol: CorruptionProtocol,
    /// Family weights: weather, lighting, camera, occlusion.
    pub style_weights: [f64; 4],
    pub intensity: f32,
    pub shuffle: bool,
    pub blend: BlendMode,
    /// Generator seed for the dynamic protocol.
    pub seed: u64,
}

impl Default for CorruptionSection {
    fn default() -> Self {
        let c = Corruptor::default();
        Self {
            protocol: c.protocol,
            style_weights: c.style_weights,
            intensity: c.intensity,
            shuffle: c.shuffle,
            blend: c.blend,
            seed: 0,
        }
    }
}

impl CorruptionSection {
    pub fn corruptor(&self) -> Corruptor {
        Corruptor {
            protocol: self.protocol,
            style_weights: self.style_weights,
            intensity: self.intensity,
            shuffle: self.shuffle,
            blend: self.blend,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.style_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.style_weights.iter().sum::<f64>() <= 0.0
        {
            bail!("corruption.style_weights must be non-negative with a positive sum");
        }
        if !(self.intensity > 0.0 && self.intensity <= 1.0) {
            bail!("corruption.intensity must be in (0, 1], got {}", self.intensity);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeBackend {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSection {
    pub backend: JudgeBackend,
    pub base_url: String,
    pub model: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub backoff_ms: u64,
    pub frame_samples: usize,
}

impl Default for JudgeSection {
    fn default() -> Self {
        let e = JudgeEndpoint::default();
        Self {
            backend: JudgeBackend::Stub,
            base_url: e.base_url,
            model: e.model,
            timeout_secs: e.timeout.as_secs_f64(),
            max_retries: e.max_retries,
            max_in_flight: e.max_in_flight,
            backoff_ms: e.backoff.as_millis() as u64,
            frame_samples: e.frame_samples,
        }
    }
}

impl JudgeSection {
    pub fn endpoint(&self) -> Result<JudgeEndpoint> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            bail!("judge.timeout_secs must be positive, got {}", self.timeout_secs);
        }
        let endpoint = JudgeEndpoint {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            timeout: Duration::from_secs_f64(self.timeout_secs),
            max_retries: self.max_retries,
            max_in_flight: self.max_in_flight,
            backoff: Duration::from_millis(self.backoff_ms),
            frame_samples: self.frame_samples,
        };
        endpoint.validate()?;
        Ok(endpoint)
    }

    pub fn is_remote(&self) -> bool {
        self.backend == JudgeBackend::Remote
    }

    /// The configured judge. The remote backend reads its key from
    /// `ROVA_JUDGE_API_KEY`.
    pub fn build(&self) -> Result<Box<dyn Judge>> {
        Ok(match self.backend {
            JudgeBackend::Stub => Box::new(StubJudge::default()),
            JudgeBackend::Remote => Box::new(
                RemoteJudge::new(self.endpoint()?).with_context(|| format!("building judge (key from {API_KEY_ENV})"))?,
            ),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out_dir: PathBuf,
    pub metrics_file: String,
    pub summary_file: String,
    /// Adds a wall-clock timestamp to metrics records (breaks byte-level
    /// reproducibility of metrics files).
    pub record_wall_clock: bool,
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            metrics_file: "metrics.jsonl".into(),
            summary_file: "summary.json".into(),
            record_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corruption: CorruptionSection,
    pub curriculum: CurriculumConfig,
    pub reward: RewardConfig,
    pub grpo: GrpoConfig,
    pub judge: JudgeSection,
    pub cost: CostProfile,
    pub io: IoSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.corruption.validate()?;
        self.curriculum.validate()?;
        self.reward.validate()?;
        self.grpo.validate()?;
        self.cost.validate()?;
        if self.judge.is_remote() {
            self.judge.endpoint()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing config")
    }

    /// Reads `path` (or defaults), applies environment overrides from
    /// `vars`, and validates.
    pub fn load_with_env(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            None => String::new(),
        };
        let base = Self::from_toml(&text)?;
        let cfg = apply_env(base, vars)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        Self::load_with_env(path, std::env::vars())
    }
}

const SECTIONS: [&str; 7] = ["corruption", "curriculum", "reward", "grpo", "judge", "cost", "io"];

fn parse_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {raw}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_env(cfg: RunConfig, vars: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig> {
    let mut overrides: Vec<(String, String, String)> = Vec::new();
    for (key, value) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        if key == API_KEY_ENV {
            continue;
        }
        let lower = rest.to_ascii_lowercase();
        let Some(section) = SECTIONS.iter().find(|s| lower.starts_with(&format!("{s}_"))) else {
            continue;
        };
        let field = lower[section.len() + 1..].to_string();
        overrides.push((section.to_string(), field, value));
    }
    if overrides.is_empty() {
        return Ok(cfg);
    }
    overrides.sort();
    let mut doc = toml::Value::try_from(&cfg).context("serializing config for overrides")?;
    for (section, field, value) in overrides {
        let table = doc
            .get_mut(&section)
            .and_then(toml::Value::as_table_mut)
            .expect("every section serializes as a table");
        log::debug!("env override {section}.{field}");
        table.insert(field, parse_literal(&value));
    }
    let text = toml::to_string(&doc)?;
    toml::from_str(&text).context("applying ROVA_* environment overrides")
}

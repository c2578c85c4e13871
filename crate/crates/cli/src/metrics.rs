//! Metrics persistence as JSON lines.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub kind: String,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock: Option<f64>,
}

impl MetricsRecord {
    pub fn new(step: u64, kind: &str) -> Self {
        Self { step, kind: kind.to_string(), values: BTreeMap::new(), wall_clock: None }
    }

    /// Adds a value; non-finite values are dropped because JSON cannot
    /// carry them.
    pub fn with(mut self, key: &str, value: f64) -> Self {
        if value.is_finite() {
            self.values.insert(key.to_string(), value);
        } else {
            log::debug!("dropping non-finite metric {key} = {value}");
        }
        self
    }
}

/// Appends records, one JSON object per line, flushing after each so a
/// failed run keeps everything written so far.
pub struct MetricsWriter {
    out: BufWriter<File>,
    last_step: HashMap<String, u64>,
    wall_clock: bool,
}

impl MetricsWriter {
    pub fn create(path: &Path, wall_clock: bool) -> Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self { out: BufWriter::new(file), last_step: HashMap::new(), wall_clock })
    }

    pub fn write(&mut self, mut record: MetricsRecord) -> Result<()> {
        if let Some(&prev) = self.last_step.get(&record.kind) {
            if record.step <= prev {
                bail!("metrics for {:?} out of order: step {} after {}", record.kind, record.step, prev);
            }
        }
        self.last_step.insert(record.kind.clone(), record.step);
        if self.wall_clock {
            record.wall_clock = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs_f64());
        }
        serde_json::to_writer(&mut self.out, &record)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

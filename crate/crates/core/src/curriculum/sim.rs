//! Model-free replay of the routing and memory state machine over a stream
//! of difficulty verdicts.
//!
//! Stream files are CSV lines `step,label,confidence[,query_id]` with an
//! optional header and `#` comments. Deferred entries keep their arrival
//! verdict when re-assessed, so a difficult entry is evicted after
//! `max_counter + 1` re-evaluations unless capacity pushes it out first.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    route, CurriculumConfig, CurriculumError, CurriculumStats, Decision, DifficultyLabel,
    DifficultyVerdict, EvictReason, MemoryBuffer, MemoryEntry, StepCounts,
};
use crate::corruption::{Corruptor, CorruptionError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub step: u64,
    pub label: DifficultyLabel,
    pub confidence: f64,
    pub query_id: String,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("stream line {line}: {message}")]
    Stream { line: usize, message: String },
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Corruption(#[from] CorruptionError),
    #[error("invalid synthetic stream parameters: {0}")]
    Synthetic(String),
}

/// Parses a stream file. Steps must be non-decreasing.
pub fn parse_stream(text: &str) -> Result<Vec<Arrival>, SimError> {
    let mut out = Vec::new();
    let mut last_step = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if out.is_empty() && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("step")) {
            continue;
        }
        let err = |message: String| SimError::Stream { line, message };
        if !(3..=4).contains(&fields.len()) {
            return Err(err(format!("expected 3 or 4 fields, found {}", fields.len())));
        }
        let step: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("invalid step {:?}", fields[0])))?;
        let label: DifficultyLabel = fields[1].parse().map_err(|e: CurriculumError| err(e.to_string()))?;
        let confidence: f64 = fields[2]
            .parse()
            .map_err(|_| err(format!("invalid confidence {:?}", fields[2])))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(err(format!("confidence {confidence} outside [0, 1]")));
        }
        if step < last_step {
            return Err(err(format!("step {step} precedes step {last_step}")));
        }
        last_step = step;
        let query_id = fields
            .get(3)
            .filter(|q| !q.is_empty())
            .map_or_else(|| format!("q{line}"), |q| (*q).to_owned());
        out.push(Arrival {
            step,
            label,
            confidence,
            query_id,
        });
    }
    Ok(out)
}

pub fn write_stream(arrivals: &[Arrival]) -> String {
    let mut s = String::from("step,label,confidence,query_id\n");
    for a in arrivals {
        s.push_str(&format!("{},{},{},{}\n", a.step, a.label, a.confidence, a.query_id));
    }
    s
}

/// Parameters of a synthetic stream with exact category quotas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticStream {
    pub steps: u64,
    pub per_step: u64,
    /// Fraction of arrivals that are confident easy samples (discarded).
    pub easy_discard_rate: f64,
    /// Fraction of arrivals that are difficult (deferred).
    pub defer_rate: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for SyntheticStream {
    fn default() -> Self {
        Self {
            steps: 1000,
            per_step: 50,
            easy_discard_rate: 0.061,
            defer_rate: 0.070,
            tau: 0.8,
            seed: 0,
        }
    }
}

/// Generates a stream where exactly `round(N * rate)` arrivals fall in each
/// routed category, shuffled across steps. Trained arrivals are a mix of
/// informative samples and low-confidence easy samples.
pub fn synthetic_stream(p: &SyntheticStream) -> Result<Vec<Arrival>, SimError> {
    let rates_ok = (0.0..=1.0).contains(&p.easy_discard_rate)
        && (0.0..=1.0).contains(&p.defer_rate)
        && p.easy_discard_rate + p.defer_rate <= 1.0;
    if !rates_ok {
        return Err(SimError::Synthetic("rates must lie in [0, 1] and sum to at most 1".into()));
    }
    if p.easy_discard_rate > 0.0 && p.tau >= 1.0 {
        return Err(SimError::Synthetic("confident easy samples need tau < 1".into()));
    }
    let n = p.steps * p.per_step;
    let n_easy = (n as f64 * p.easy_discard_rate).round() as u64;
    let n_defer = (n as f64 * p.defer_rate).round() as u64;
    let mut kinds: Vec<Decision> = (0..n)
        .map(|i| match i {
            i if i < n_easy => Decision::Discard,
            i if i < n_easy + n_defer => Decision::Defer,
            _ => Decision::Train,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    kinds.shuffle(&mut rng);
    let arrivals = kinds
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let (label, confidence) = match kind {
                // random::<f64>() lies in [0, 1), so the confidence lies in (tau, 1].
                Decision::Discard => (DifficultyLabel::Easy, 1.0 - (1.0 - p.tau) * rng.random::<f64>()),
                Decision::Defer => (DifficultyLabel::Difficult, rng.random_range(0.0..=1.0)),
                Decision::Train if rng.random_bool(0.2) => (DifficultyLabel::Easy, rng.random_range(0.0..=p.tau)),
                Decision::Train => (DifficultyLabel::Informative, rng.random_range(0.0..=1.0)),
            };
            Arrival {
                step: i as u64 / p.per_step.max(1) + 1,
                label,
                confidence,
                query_id: format!("s{i}"),
            }
        })
        .collect();
    Ok(arrivals)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub counts: StepCounts,
    pub rho: Option<f64>,
    pub buffer_len: usize,
    pub reevaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRates {
    pub window: u64,
    pub first_step: u64,
    pub last_step: u64,
    pub arrivals: u64,
    pub discard_rate: f64,
    pub defer_rate: f64,
    pub train_rate: f64,
    pub promoted: u64,
    pub evicted: u64,
    pub mean_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub steps: Vec<StepRecord>,
    pub windows: Vec<WindowRates>,
    pub rho_bar: Option<f64>,
    pub totals: StepCounts,
    pub max_buffer_len: usize,
    pub final_buffer_len: usize,
    pub evicted_capacity: u64,
    pub evicted_easy: u64,
    pub evicted_counter: u64,
    /// Counter values of entries evicted for exceeding `max_counter`.
    pub counter_at_eviction: Vec<u32>,
    /// Confident easy arrivals that were routed to training (always 0).
    pub confident_easy_trained: u64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub curriculum: CurriculumConfig,
    /// Steps per reported window.
    pub window: u64,
    /// Nominal video shape used for the specs of deferred entries.
    pub video_shape: [usize; 3],
    pub corruptor: Corruptor,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            curriculum: CurriculumConfig::default(),
            window: 50,
            video_shape: [8, 32, 32],
            corruptor: Corruptor::default(),
        }
    }
}

/// Replays `arrivals` through routing, deferral and periodic
/// re-evaluation. Every step from the first to the last listed step is
/// simulated, including steps without arrivals.
pub fn simulate(arrivals: &[Arrival], cfg: &SimConfig) -> Result<(SimReport, MemoryBuffer), SimError> {
    let cur = &cfg.curriculum;
    cur.validate()?;
    let mut buffer = MemoryBuffer::new(cur.buffer_cap);
    let mut stats = CurriculumStats::default();
    let mut arrival_verdicts: HashMap<String, DifficultyVerdict> = HashMap::new();
    let mut report = SimReport {
        steps: Vec::new(),
        windows: Vec::new(),
        rho_bar: None,
        totals: StepCounts::default(),
        max_buffer_len: 0,
        final_buffer_len: 0,
        evicted_capacity: 0,
        evicted_easy: 0,
        evicted_counter: 0,
        counter_at_eviction: Vec::new(),
        confident_easy_trained: 0,
    };
    let (Some(first), Some(last)) = (arrivals.first(), arrivals.last()) else {
        return Ok((report, buffer));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut idx = 0;
    for step in first.step..=last.step {
        let mut counts = StepCounts::default();
        while idx < arrivals.len() && arrivals[idx].step == step {
            let a = &arrivals[idx];
            idx += 1;
            counts.arrivals += 1;
            let verdict = DifficultyVerdict::new(a.label, a.confidence)?;
            match route(&verdict, cur.tau) {
                Decision::Discard => counts.discarded += 1,
                Decision::Train => {
                    counts.trained += 1;
                    if a.label == DifficultyLabel::Easy && a.confidence > cur.tau {
                        report.confident_easy_trained += 1;
                    }
                }
                Decision::Defer => {
                    counts.deferred += 1;
                    let spec = cfg.corruptor.make_spec(&a.query_id, cfg.video_shape, &mut rng)?;
                    arrival_verdicts.insert(a.query_id.clone(), verdict);
                    if let Some(dropped) = buffer.defer(MemoryEntry::new(a.query_id.clone(), spec, step))? {
                        arrival_verdicts.remove(&dropped.query_id);
                        counts.evicted += 1;
                        report.evicted_capacity += 1;
                    }
                }
            }
            report.max_buffer_len = report.max_buffer_len.max(buffer.len());
        }
        let reevaluated = buffer.due(step, cur.reeval_period);
        if reevaluated {
            let outcome = buffer.reevaluate(cur.max_counter, |e| Ok(arrival_verdicts[&e.query_id]));
            counts.promoted += outcome.promoted.len() as u64;
            for e in &outcome.promoted {
                arrival_verdicts.remove(&e.query_id);
            }
            for (e, reason) in &outcome.evicted {
                arrival_verdicts.remove(&e.query_id);
                counts.evicted += 1;
                match reason {
                    EvictReason::Capacity => report.evicted_capacity += 1,
                    EvictReason::Easy => report.evicted_easy += 1,
                    EvictReason::Counter => {
                        report.evicted_counter += 1;
                        report.counter_at_eviction.push(e.counter);
                    }
                }
            }
        }
        let rho = stats.record(counts);
        report.steps.push(StepRecord {
            step,
            counts,
            rho,
            buffer_len: buffer.len(),
            reevaluated,
        });
    }
    report.rho_bar = stats.rho_bar();
    report.totals = stats.totals;
    report.final_buffer_len = buffer.len();
    report.windows = windows(&report.steps, cfg.window.max(1));
    Ok((report, buffer))
}

fn windows(steps: &[StepRecord], size: u64) -> Vec<WindowRates> {
    steps
        .chunks(size as usize)
        .enumerate()
        .map(|(w, chunk)| {
            let mut c = StepCounts::default();
            let mut rho_sum = 0.0;
            let mut rho_n = 0;
            for s in chunk {
                c.arrivals += s.counts.arrivals;
                c.discarded += s.counts.discarded;
                c.deferred += s.counts.deferred;
                c.trained += s.counts.trained;
                c.promoted += s.counts.promoted;
                c.evicted += s.counts.evicted;
                if let Some(r) = s.rho {
                    rho_sum += r;
                    rho_n += 1;
                }
            }
            let rate = |x: u64| if c.arrivals == 0 { 0.0 } else { x as f64 / c.arrivals as f64 };
            WindowRates {
                window: w as u64,
                first_step: chunk[0].step,
                last_step: chunk[chunk.len() - 1].step,
                arrivals: c.arrivals,
                discard_rate: rate(c.discarded),
                defer_rate: rate(c.deferred),
                train_rate: rate(c.trained),
                promoted: c.promoted,
                evicted: c.evicted,
                mean_rho: (rho_n > 0).then(|| rho_sum / rho_n as f64),
            }
        })
        .collect()
}

pub fn windows_csv(windows: &[WindowRates]) -> String {
    let mut s = String::from(
        "window,first_step,last_step,arrivals,discard_rate,defer_rate,train_rate,promoted,evicted,mean_rho\n",
    );
    for w in windows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            w.window,
            w.first_step,
            w.last_step,
            w.arrivals,
            w.discard_rate,
            w.defer_rate,
            w.train_rate,
            w.promoted,
            w.evicted,
            w.mean_rho.map_or(String::new(), |r| r.to_string()),
        ));
    }
    s
}

pub fn rho_csv(steps: &[StepRecord]) -> String {
    let mut s = String::from("step,arrivals,discarded,deferred,trained,promoted,evicted,rho,buffer_len\n");
    for r in steps {
        let c = r.counts;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.step,
            c.arrivals,
            c.discarded,
            c.deferred,
            c.trained,
            c.promoted,
            c.evicted,
            r.rho.map_or(String::new(), |x| x.to_string()),
            r.buffer_len
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_stream_with_header_and_comments() {
        let text = "step,label,confidence,query_id\n# comment\n1,easy,0.9,a\n1,difficult,0.2\n\n2,informative,0.5,c\n";
        let a = parse_stream(text).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].query_id, "q4");
        assert_eq!(a[2].step, 2);
    }

    #[test]
    fn malformed_line_reports_number() {
        for (text, line) in [
            ("1,easy,0.9\n2,sideways,0.1\n", 2),
            ("1,easy\n", 1),
            ("1,easy,1.5\n", 1),
            ("3,easy,0.5\n2,easy,0.5\n", 2),
            ("x,easy,0.5\n", 1),
        ] {
            match parse_stream(text) {
                Err(SimError::Stream { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn synthetic_quotas_are_exact() {
        let p = SyntheticStream {
            steps: 100,
            per_step: 10,
            ..SyntheticStream::default()
        };
        let a = synthetic_stream(&p).unwrap();
        assert_eq!(a.len(), 1000);
        let routed: Vec<Decision> = a
            .iter()
            .map(|x| route(&DifficultyVerdict::new(x.label, x.confidence).unwrap(), p.tau))
            .collect();
        assert_eq!(routed.iter().filter(|d| **d == Decision::Discard).count(), 61);
        assert_eq!(routed.iter().filter(|d| **d == Decision::Defer).count(), 70);
        assert_eq!(parse_stream(&write_stream(&a)).unwrap(), a);
    }

    #[test]
    fn all_easy_stream_keeps_buffer_empty() {
        let arrivals: Vec<Arrival> = (1..=20)
            .map(|s| Arrival {
                step: s,
                label: DifficultyLabel::Easy,
                confidence: 0.95,
                query_id: format!("e{s}"),
            })
            .collect();
        let (report, buffer) = simulate(&arrivals, &SimConfig::default()).unwrap();
        assert!(buffer.is_empty());
        assert_eq!(report.rho_bar, Some(0.0));
    }

    #[test]
    fn all_difficult_evicted_after_four_reevaluations() {
        let arrivals: Vec<Arrival> = (1..=400)
            .map(|s| Arrival {
                step: s,
                label: DifficultyLabel::Difficult,
                confidence: 0.5,
                query_id: format!("d{s}"),
            })
            .collect();
        let mut cfg = SimConfig::default();
        cfg.curriculum.buffer_cap = 300;
        cfg.curriculum.reeval_period = 10;
        let (report, _) = simulate(&arrivals, &cfg).unwrap();
        assert!(report.max_buffer_len <= 300);
        assert!(report.evicted_counter > 0);
        assert!(report.counter_at_eviction.iter().all(|&c| c == 4));
        assert_eq!(report.rho_bar, Some(0.0));
    }
}

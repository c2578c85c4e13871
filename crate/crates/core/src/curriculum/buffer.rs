use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CurriculumError, DifficultyLabel, DifficultyVerdict};
use crate::corruption::PerturbationSpec;
use crate::judge::JudgeError;

/// A deferred sample. The perturbed video is not stored; it is regenerated
/// from `spec` and the clean source when the entry is re-assessed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryEntry {
    pub query_id: String,
    pub spec: PerturbationSpec,
    pub counter: u32,
    pub inserted_at: u64,
}

impl MemoryEntry {
    pub fn new(query_id: impl Into<String>, spec: PerturbationSpec, inserted_at: u64) -> Self {
        Self {
            query_id: query_id.into(),
            spec,
            counter: 0,
            inserted_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictReason {
    /// Dropped to make room for a newer entry.
    Capacity,
    /// Re-assessed as easy.
    Easy,
    /// Re-assessed more than `max_counter` times without becoming trainable.
    Counter,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReevalOutcome {
    pub promoted: Vec<MemoryEntry>,
    pub evicted: Vec<(MemoryEntry, EvictReason)>,
    /// Entries whose assessment failed; they stay resident unchanged.
    pub unassessed: usize,
    /// Confidences of successful re-assessments, for statistics only.
    pub confidences: Vec<f64>,
}

/// Bounded FIFO replay memory of deferred samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    entries: VecDeque<MemoryEntry>,
    cap: usize,
}

impl MemoryBuffer {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0, "buffer capacity must be positive");
        Self {
            entries: VecDeque::new(),
            cap,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.cap
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    /// Appends a fresh entry, dropping the oldest one first when full.
    pub fn defer(&mut self, entry: MemoryEntry) -> Result<Option<MemoryEntry>, CurriculumError> {
        if entry.counter != 0 {
            return Err(CurriculumError::NonZeroCounter(entry.counter));
        }
        let dropped = if self.is_full() {
            self.entries.pop_front()
        } else {
            None
        };
        self.entries.push_back(entry);
        Ok(dropped)
    }

    /// Re-evaluation runs when the buffer is full or every `period` steps.
    pub fn due(&self, step: u64, period: u64) -> bool {
        !self.is_empty() && (self.is_full() || step % period == 0)
    }

    /// Re-assesses every resident entry.
    ///
    /// A successful assessment increments the counter. Informative entries
    /// are promoted, easy ones evicted, and difficult ones evicted once the
    /// counter exceeds `max_counter`. Confidence never affects retention.
    /// A failed assessment leaves the entry resident with its counter
    /// unchanged.
    pub fn reevaluate<F>(&mut self, max_counter: u32, mut assess: F) -> ReevalOutcome
    where
        F: FnMut(&MemoryEntry) -> Result<DifficultyVerdict, JudgeError>,
    {
        let mut outcome = ReevalOutcome::default();
        let mut kept = VecDeque::with_capacity(self.entries.len());
        for mut entry in self.entries.drain(..) {
            let verdict = match assess(&entry) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("re-evaluation of {} failed: {e}", entry.query_id);
                    outcome.unassessed += 1;
                    kept.push_back(entry);
                    continue;
                }
            };
            entry.counter += 1;
            outcome.confidences.push(verdict.confidence);
            match verdict.label {
                DifficultyLabel::Informative => outcome.promoted.push(entry),
                DifficultyLabel::Easy => outcome.evicted.push((entry, EvictReason::Easy)),
                DifficultyLabel::Difficult if entry.counter > max_counter => {
                    outcome.evicted.push((entry, EvictReason::Counter))
                }
                DifficultyLabel::Difficult => kept.push_back(entry),
            }
        }
        self.entries = kept;
        outcome
    }

    pub fn to_json(&self) -> String {
        let entries: Vec<&MemoryEntry> = self.entries.iter().collect();
        serde_json::to_string_pretty(&entries).expect("entries serialize")
    }

    pub fn from_json(text: &str, cap: usize) -> Result<Self, CurriculumError> {
        let entries: Vec<MemoryEntry> =
            serde_json::from_str(text).map_err(|e| CurriculumError::Checkpoint(e.to_string()))?;
        if entries.len() > cap {
            return Err(CurriculumError::Checkpoint(format!(
                "{} entries exceed capacity {cap}",
                entries.len()
            )));
        }
        Ok(Self {
            entries: entries.into(),
            cap,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CurriculumError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| CurriculumError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path, cap: usize) -> Result<Self, CurriculumError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CurriculumError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::{Family, PerturbationStyle, Subtype};

    fn entry(id: &str) -> MemoryEntry {
        let style = PerturbationStyle::new(Family::Occlusion, Subtype::Static).unwrap();
        MemoryEntry::new(id, PerturbationSpec::sample(style, 0.7, 1, [2, 8, 8], false).unwrap(), 0)
    }

    fn verdict(label: DifficultyLabel) -> Result<DifficultyVerdict, JudgeError> {
        Ok(DifficultyVerdict::new(label, 0.5).unwrap())
    }

    #[test]
    fn fifo_at_capacity() {
        let mut b = MemoryBuffer::new(2);
        assert_eq!(b.defer(entry("a")).unwrap(), None);
        assert_eq!(b.len(), 1);
        b.defer(entry("b")).unwrap();
        let dropped = b.defer(entry("c")).unwrap().unwrap();
        assert_eq!(dropped.query_id, "a");
        assert_eq!(b.len(), 2);
        let mut e = entry("d");
        e.counter = 1;
        assert!(b.defer(e).is_err());
    }

    #[test]
    fn promotion_and_easy_eviction() {
        let mut b = MemoryBuffer::new(10);
        b.defer(entry("p")).unwrap();
        b.defer(entry("e")).unwrap();
        let out = b.reevaluate(3, |e| {
            verdict(if e.query_id == "p" {
                DifficultyLabel::Informative
            } else {
                DifficultyLabel::Easy
            })
        });
        assert_eq!(out.promoted.len(), 1);
        assert_eq!(out.promoted[0].query_id, "p");
        assert_eq!(out.evicted[0].1, EvictReason::Easy);
        assert!(b.is_empty());
    }

    #[test]
    fn counter_eviction_after_max_plus_one() {
        let mut b = MemoryBuffer::new(10);
        b.defer(entry("d")).unwrap();
        for round in 1..=3 {
            let out = b.reevaluate(3, |_| verdict(DifficultyLabel::Difficult));
            assert!(out.evicted.is_empty(), "round {round}");
            assert_eq!(b.entries().next().unwrap().counter, round);
        }
        let out = b.reevaluate(3, |_| verdict(DifficultyLabel::Difficult));
        assert_eq!(out.evicted.len(), 1);
        assert_eq!(out.evicted[0].0.counter, 4);
        assert_eq!(out.evicted[0].1, EvictReason::Counter);
    }

    #[test]
    fn failed_assessment_keeps_counter() {
        let mut b = MemoryBuffer::new(10);
        b.defer(entry("x")).unwrap();
        let out = b.reevaluate(3, |_| Err(JudgeError::NoVerdict { raw: String::new() }));
        assert_eq!(out.unassessed, 1);
        assert_eq!(b.entries().next().unwrap().counter, 0);
    }

    #[test]
    fn due_rule() {
        let mut b = MemoryBuffer::new(2);
        assert!(!b.due(50, 50));
        b.defer(entry("a")).unwrap();
        assert!(b.due(50, 50));
        assert!(!b.due(51, 50));
        b.defer(entry("b")).unwrap();
        assert!(b.due(51, 50));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut b = MemoryBuffer::new(4);
        b.defer(entry("a")).unwrap();
        b.defer(entry("b")).unwrap();
        let restored = MemoryBuffer::from_json(&b.to_json(), 4).unwrap();
        assert_eq!(restored, b);
        assert!(MemoryBuffer::from_json(&b.to_json(), 1).is_err());
    }
}

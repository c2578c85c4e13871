//! Deterministic lexical judge for offline runs and tests.
//!
//! The stub is intentionally literal: "NYC" and "New York City" score 0.0
//! because their normalized strings differ, where a semantic judge would
//! score 1.0.

use std::collections::HashSet;

use super::{Judge, JudgeError, JudgeInputs, JudgeKind, JudgeVerdict};

/// Lowercases, replaces every non-alphanumeric character with a space and
/// collapses whitespace.
pub fn normalize_text(text: &str) -> String {
    text.chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Jaccard similarity of the normalized token sets. Two empty texts are
/// identical (1.0).
pub fn jaccard(a: &str, b: &str) -> f64 {
    let na = normalize_text(a);
    let nb = normalize_text(b);
    let sa: HashSet<&str> = na.split(' ').filter(|t| !t.is_empty()).collect();
    let sb: HashSet<&str> = nb.split(' ').filter(|t| !t.is_empty()).collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StubJudge {
    /// Jaccard at or above which reasoning scores 1.0.
    pub full_match: f64,
    /// Jaccard at or above which reasoning scores 0.5.
    pub partial_match: f64,
    /// Coverage below which a masked video counts as answerable.
    pub answerable_coverage: f64,
}

impl Default for StubJudge {
    fn default() -> Self {
        Self {
            full_match: 0.8,
            partial_match: 0.4,
            answerable_coverage: 0.5,
        }
    }
}

fn field<'a>(kind: JudgeKind, name: &'static str, v: &'a Option<String>) -> Result<&'a str, JudgeError> {
    v.as_deref().ok_or(JudgeError::MissingInput { kind, field: name })
}

impl Judge for StubJudge {
    fn judge(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<JudgeVerdict, JudgeError> {
        match kind {
            JudgeKind::AnswerConsistency => {
                let r = field(kind, "reference_answer", &inputs.reference_answer)?;
                let c = field(kind, "candidate_answer", &inputs.candidate_answer)?;
                let score = if normalize_text(r) == normalize_text(c) { 1.0 } else { 0.0 };
                JudgeVerdict::new(kind, score, None, format!("{{\"score\": {score:.1}}}"))
            }
            JudgeKind::ReasoningConsistency => {
                let r = field(kind, "reference_think", &inputs.reference_think)?;
                let c = field(kind, "candidate_think", &inputs.candidate_think)?;
                let j = jaccard(r, c);
                let score = if j >= self.full_match {
                    1.0
                } else if j >= self.partial_match {
                    0.5
                } else {
                    0.0
                };
                JudgeVerdict::new(kind, score, None, format!("{{\"score\": {score:.1}}}"))
            }
            JudgeKind::Difficulty => {
                let coverage = inputs
                    .mask_coverage
                    .ok_or(JudgeError::MissingInput {
                        kind,
                        field: "mask_coverage",
                    })?
                    .clamp(0.0, 1.0);
                let yes = coverage < self.answerable_coverage;
                let confidence = 1.0 - coverage;
                let word = if yes { "YES" } else { "NO" };
                JudgeVerdict::new(
                    kind,
                    if yes { 1.0 } else { 0.0 },
                    Some(confidence),
                    format!("{word} {confidence}"),
                )
            }
        }
    }
}

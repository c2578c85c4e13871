//! LLM-as-judge scoring.
//!
//! Three judgements are used by the reward and curriculum stages: answer
//! consistency (binary), reasoning consistency (three-tier) and difficulty
//! (answerability of a masked video, with a confidence). [`StubJudge`] is a
//! deterministic lexical oracle for offline runs; [`RemoteJudge`] talks to an
//! OpenAI-compatible chat-completions endpoint.

mod parse;
mod prompt;
mod remote;
mod stub;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame_store::FrameSequence;

pub use parse::parse_verdict;
pub use prompt::build_prompt;
pub use remote::{JudgeEndpoint, RemoteJudge, API_KEY_ENV};
pub use stub::{jaccard, normalize_text, StubJudge};

/// Tolerance used when snapping parsed scores onto their allowed values.
pub const SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    AnswerConsistency,
    ReasoningConsistency,
    Difficulty,
}

impl JudgeKind {
    pub fn allowed_scores(self) -> &'static [f64] {
        match self {
            JudgeKind::AnswerConsistency => &[0.0, 1.0],
            JudgeKind::ReasoningConsistency => &[0.0, 0.5, 1.0],
            JudgeKind::Difficulty => &[0.0, 1.0],
        }
    }
}

impl fmt::Display for JudgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JudgeKind::AnswerConsistency => "answer_consistency",
            JudgeKind::ReasoningConsistency => "reasoning_consistency",
            JudgeKind::Difficulty => "difficulty",
        })
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("missing prompt input `{field}` for {kind}")]
    MissingInput { kind: JudgeKind, field: &'static str },
    #[error("no verdict found in judge response: {raw:?}")]
    NoVerdict { raw: String },
    #[error("{kind} score {value} is not one of {allowed:?} (response: {raw:?})")]
    ScoreDomain {
        kind: JudgeKind,
        value: f64,
        allowed: &'static [f64],
        raw: String,
    },
    #[error("invalid difficulty confidence {value} (response: {raw:?})")]
    Confidence { value: f64, raw: String },
    #[error("invalid judge endpoint: {0}")]
    Endpoint(String),
    #[error("judge request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("judge returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed chat-completions response: {0}")]
    Protocol(String),
    #[error("failed to encode frames for the judge: {0}")]
    Encode(String),
}

impl JudgeError {
    /// Raw response text attached to parse failures, if any.
    pub fn raw(&self) -> Option<&str> {
        match self {
            JudgeError::NoVerdict { raw }
            | JudgeError::ScoreDomain { raw, .. }
            | JudgeError::Confidence { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

/// A validated judge decision. Scores always lie in the allowed set for
/// their kind and difficulty verdicts always carry a confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgeVerdict {
    kind: JudgeKind,
    score: f64,
    confidence: Option<f64>,
    raw: String,
}

impl JudgeVerdict {
    pub fn new(
        kind: JudgeKind,
        score: f64,
        confidence: Option<f64>,
        raw: impl Into<String>,
    ) -> Result<Self, JudgeError> {
        let raw = raw.into();
        let allowed = kind.allowed_scores();
        let Some(&snapped) = allowed
            .iter()
            .find(|&&a| (a - score).abs() <= SCORE_TOLERANCE)
        else {
            return Err(JudgeError::ScoreDomain {
                kind,
                value: score,
                allowed,
                raw,
            });
        };
        let confidence = match (kind, confidence) {
            (JudgeKind::Difficulty, None) => {
                return Err(JudgeError::Confidence { value: f64::NAN, raw })
            }
            (JudgeKind::Difficulty, Some(c)) if !(0.0..=1.0).contains(&c) => {
                return Err(JudgeError::Confidence { value: c, raw })
            }
            (_, c) => c,
        };
        Ok(Self {
            kind,
            score: snapped,
            confidence,
            raw,
        })
    }

    pub fn kind(&self) -> JudgeKind {
        self.kind
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn confidence(&self) -> Option<f64> {
        self.confidence
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// For difficulty verdicts: whether the masked video is answerable.
    pub fn answerable(&self) -> bool {
        self.score == 1.0
    }
}

/// Text and video inputs for one judge call. Only the fields required by
/// the requested kind need to be set.
#[derive(Debug, Clone, Default)]
pub struct JudgeInputs {
    pub reference_answer: Option<String>,
    pub candidate_answer: Option<String>,
    pub reference_think: Option<String>,
    pub candidate_think: Option<String>,
    pub question_text: Option<String>,
    /// Fraction of masked pixels, used by the stub's difficulty rule.
    pub mask_coverage: Option<f64>,
    /// The masked video shown to a remote difficulty judge.
    pub masked_video: Option<FrameSequence>,
}

impl JudgeInputs {
    pub fn answers(reference: &str, candidate: &str) -> Self {
        Self {
            reference_answer: Some(reference.to_owned()),
            candidate_answer: Some(candidate.to_owned()),
            ..Self::default()
        }
    }

    pub fn reasoning(reference: &str, candidate: &str) -> Self {
        Self {
            reference_think: Some(reference.to_owned()),
            candidate_think: Some(candidate.to_owned()),
            ..Self::default()
        }
    }

    pub fn difficulty(question: &str, mask_coverage: f64) -> Self {
        Self {
            question_text: Some(question.to_owned()),
            mask_coverage: Some(mask_coverage),
            ..Self::default()
        }
    }
}

/// Anything that can score a judge request. Implementations must be safe
/// to call from several threads at once.
pub trait Judge: Send + Sync {
    fn judge(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<JudgeVerdict, JudgeError>;
}

impl<J: Judge + ?Sized> Judge for &J {
    fn judge(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge(kind, inputs)
    }
}

impl<J: Judge + ?Sized> Judge for Box<J> {
    fn judge(&self, kind: JudgeKind, inputs: &JudgeInputs) -> Result<JudgeVerdict, JudgeError> {
        (**self).judge(kind, inputs)
    }
}

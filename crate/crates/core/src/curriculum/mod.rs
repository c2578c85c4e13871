//! Difficulty-aware data selection.
//!
//! Each arriving sample is assessed as easy, informative or difficult with a
//! confidence `c`, then routed: confident easy samples (`c > tau`) are
//! discarded, difficult ones are deferred to a bounded replay memory, and
//! everything else is trained on immediately. Deferred entries are
//! re-assessed periodically; informative ones are promoted back into
//! training, easy ones are dropped, and entries re-assessed more than
//! `max_counter` times are evicted.

mod buffer;
pub mod sim;
mod stats;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame_store::FrameSequence;
use crate::judge::{Judge, JudgeError, JudgeInputs, JudgeKind};
use crate::reward::{accuracy_reward, normalize_answer, StructuredOutput};

pub use buffer::{EvictReason, MemoryBuffer, MemoryEntry, ReevalOutcome};
pub use stats::{CurriculumStats, StepCounts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyLabel {
    Easy,
    Informative,
    Difficult,
}

impl fmt::Display for DifficultyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DifficultyLabel::Easy => "easy",
            DifficultyLabel::Informative => "informative",
            DifficultyLabel::Difficult => "difficult",
        })
    }
}

impl std::str::FromStr for DifficultyLabel {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(DifficultyLabel::Easy),
            "informative" => Ok(DifficultyLabel::Informative),
            "difficult" | "hard" => Ok(DifficultyLabel::Difficult),
            other => Err(CurriculumError::Label(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifficultyVerdict {
    pub label: DifficultyLabel,
    pub confidence: f64,
}

impl DifficultyVerdict {
    pub fn new(label: DifficultyLabel, confidence: f64) -> Result<Self, CurriculumError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(CurriculumError::Confidence(confidence));
        }
        Ok(Self { label, confidence })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessMode {
    /// Compare the model's clean and perturbed answers.
    Comparison,
    /// Ask the difficulty judge about the masked video.
    Judge,
    /// Judge label, overruled by the comparison when they disagree on
    /// whether the sample is answerable.
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Discard,
    Train,
    Defer,
}

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("unknown difficulty label {0:?}")]
    Label(String),
    #[error("invalid curriculum config: {0}")]
    Config(String),
    #[error("memory entries must be inserted with counter 0, got {0}")]
    NonZeroCounter(u32),
    #[error("assessment needs at least one clean and one perturbed rollout")]
    EmptyGroup,
    #[error("mode {0:?} requires a judge")]
    NoJudge(AssessMode),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub tau: f64,
    /// Re-evaluations an entry may survive; it is evicted once its counter
    /// exceeds this value.
    pub max_counter: u32,
    pub buffer_cap: usize,
    pub reeval_period: u64,
    /// `None` selects judge mode when an endpoint is configured and
    /// comparison mode otherwise.
    pub mode: Option<AssessMode>,
    /// Selection bounds carried for completeness; no rule reads them.
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            max_counter: 3,
            buffer_cap: 1000,
            reeval_period: 50,
            mode: None,
            a_min: 0.3,
            a_max: 0.85,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(CurriculumError::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if self.max_counter == 0 || self.buffer_cap == 0 || self.reeval_period == 0 {
            return Err(CurriculumError::Config(
                "max_counter, buffer_cap and reeval_period must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.a_min) || !(0.0..=1.0).contains(&self.a_max) || self.a_min > self.a_max {
            return Err(CurriculumError::Config("need 0 <= a_min <= a_max <= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_mode(&self, has_endpoint: bool) -> AssessMode {
        self.mode.unwrap_or(if has_endpoint {
            AssessMode::Judge
        } else {
            AssessMode::Comparison
        })
    }
}

/// Everything an assessment may look at for one sample.
#[derive(Debug, Clone, Copy)]
pub struct AssessInput<'a> {
    pub question: &'a str,
    pub truth: &'a str,
    pub clean: &'a [StructuredOutput],
    pub pert: &'a [StructuredOutput],
    pub mask_coverage: f64,
    pub masked_video: Option<&'a FrameSequence>,
}

/// Group-level comparison of the two branches.
///
/// A pair `(o_j, o~_j)` is solved when both answers are correct and agree.
/// The group is easy when every pair is solved, difficult when no perturbed
/// rollout is correct or no pair agrees, and informative otherwise. With a
/// single pair this is the per-sample rule: solved is easy, a wrong
/// perturbed answer or a divergent pair is difficult.
///
/// Confidence is the frequency of the most common perturbed answer.
pub fn assess_comparison(input: &AssessInput<'_>) -> Result<DifficultyVerdict, CurriculumError> {
    let (clean, pert) = (input.clean, input.pert);
    if clean.is_empty() || pert.is_empty() {
        return Err(CurriculumError::EmptyGroup);
    }
    let pairs = clean.len().min(pert.len());
    let answer_key = |o: &StructuredOutput| {
        if o.format_ok {
            Some(normalize_answer(&o.answer))
        } else {
            None
        }
    };
    let correct = |o: &StructuredOutput| accuracy_reward(o, input.truth) == 1.0;
    let agrees = |j: usize| {
        let a = answer_key(&clean[j]);
        a.is_some() && a == answer_key(&pert[j])
    };
    let solved = (0..pairs).filter(|&j| correct(&clean[j]) && correct(&pert[j]) && agrees(j)).count();
    let agree = (0..pairs).filter(|&j| agrees(j)).count();
    let pert_correct = pert.iter().filter(|o| correct(o)).count();

    let mut counts: HashMap<Option<String>, usize> = HashMap::new();
    for o in pert {
        *counts.entry(answer_key(o)).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    let confidence = modal as f64 / pert.len() as f64;

    let label = if solved == pairs {
        DifficultyLabel::Easy
    } else if pert_correct == 0 || agree == 0 {
        DifficultyLabel::Difficult
    } else {
        DifficultyLabel::Informative
    };
    DifficultyVerdict::new(label, confidence)
}

/// Difficulty judge verdict mapped onto labels: NO is difficult, YES with
/// `c > tau` is easy, YES with `c <= tau` is informative.
pub fn assess_judge<J: Judge + ?Sized>(
    input: &AssessInput<'_>,
    judge: &J,
    tau: f64,
) -> Result<DifficultyVerdict, CurriculumError> {
    let inputs = JudgeInputs {
        question_text: Some(input.question.to_owned()),
        mask_coverage: Some(input.mask_coverage),
        masked_video: input.masked_video.cloned(),
        ..JudgeInputs::default()
    };
    let verdict = judge.judge(JudgeKind::Difficulty, &inputs)?;
    let c = verdict.confidence().unwrap_or(0.0);
    let label = match (verdict.answerable(), c > tau) {
        (false, _) => DifficultyLabel::Difficult,
        (true, true) => DifficultyLabel::Easy,
        (true, false) => DifficultyLabel::Informative,
    };
    DifficultyVerdict::new(label, c)
}

pub fn assess(
    input: &AssessInput<'_>,
    judge: Option<&dyn Judge>,
    mode: AssessMode,
    tau: f64,
) -> Result<DifficultyVerdict, CurriculumError> {
    match mode {
        AssessMode::Comparison => assess_comparison(input),
        AssessMode::Judge => assess_judge(input, judge.ok_or(CurriculumError::NoJudge(mode))?, tau),
        AssessMode::Hybrid => {
            let judged = assess_judge(input, judge.ok_or(CurriculumError::NoJudge(mode))?, tau)?;
            let compared = assess_comparison(input)?;
            let judge_answerable = judged.label != DifficultyLabel::Difficult;
            let model_answerable = compared.label != DifficultyLabel::Difficult;
            if judge_answerable == model_answerable {
                Ok(judged)
            } else {
                DifficultyVerdict::new(compared.label, (judged.confidence + compared.confidence) / 2.0)
            }
        }
    }
}

pub fn route(verdict: &DifficultyVerdict, tau: f64) -> Decision {
    match verdict.label {
        DifficultyLabel::Easy if verdict.confidence > tau => Decision::Discard,
        DifficultyLabel::Difficult => Decision::Defer,
        _ => Decision::Train,
    }
}

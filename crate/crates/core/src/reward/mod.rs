//! Composite rewards for a clean/perturbed rollout pair.
//!
//! `R = w_F * format + w_Acc * accuracy + alpha_r * align_reason + alpha_a * align_answer`
//!
//! Format and accuracy are scored on the perturbed-branch output, which is
//! the one being optimized; the clean output is the alignment reference.
//! Accuracy is always computed before the judge is consulted, so a judge
//! failure still reports the cheap components in [`RewardError::partial`].

mod output;
mod step;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{Judge, JudgeError, JudgeInputs, JudgeKind};

pub use output::{accuracy_reward, extract_output, normalize_answer, option_letter, StructuredOutput};
pub use step::{cosine, segment_reasoning, step_level_reward, Embedder, Segments, TokenCountEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    #[default]
    Default,
    /// Align to the clean output when it is correct, otherwise to the
    /// closest correct rollout of the clean group.
    Conditional,
    /// Replace the judge's reasoning score with stage-weighted cosine
    /// similarity of observation, reasoning and action segments.
    StepLevel,
    ConditionalPlusStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha_r: f64,
    pub alpha_a: f64,
    pub w_format: f64,
    pub w_accuracy: f64,
    pub variant: RewardVariant,
    pub beta_obs: f64,
    pub beta_reason: f64,
    pub beta_act: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha_r: 0.3,
            alpha_a: 0.7,
            w_format: 1.0,
            w_accuracy: 1.0,
            variant: RewardVariant::Default,
            beta_obs: 0.3,
            beta_reason: 0.5,
            beta_act: 0.2,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid reward config: {0}")]
pub struct RewardConfigError(String);

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardConfigError> {
        let fields = [
            ("alpha_r", self.alpha_r),
            ("alpha_a", self.alpha_a),
            ("w_format", self.w_format),
            ("w_accuracy", self.w_accuracy),
            ("beta_obs", self.beta_obs),
            ("beta_reason", self.beta_reason),
            ("beta_act", self.beta_act),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RewardConfigError(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Largest attainable total reward.
    pub fn max_total(&self) -> f64 {
        self.w_format + self.w_accuracy + self.alpha_r + self.alpha_a
    }

    pub fn betas(&self) -> [f64; 3] {
        [self.beta_obs, self.beta_reason, self.beta_act]
    }
}

/// Unweighted reasoning and answer consistency scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentScores {
    pub reason: f64,
    pub answer: f64,
}

impl AlignmentScores {
    pub fn weighted(&self, cfg: &RewardConfig) -> f64 {
        cfg.alpha_r * self.reason + cfg.alpha_a * self.answer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub accuracy: f64,
    pub align_reason: f64,
    pub align_answer: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(format: f64, accuracy: f64, align: AlignmentScores, cfg: &RewardConfig) -> Self {
        Self {
            format,
            accuracy,
            align_reason: align.reason,
            align_answer: align.answer,
            total: cfg.w_format * format + cfg.w_accuracy * accuracy + align.weighted(cfg),
        }
    }
}

#[derive(Debug, Error)]
#[error("reward computation failed: {source}")]
pub struct RewardError {
    /// Components computed before the failure; alignment fields are zero.
    pub partial: RewardBreakdown,
    #[source]
    pub source: JudgeError,
}

/// Judge-scored consistency between the clean reference and the perturbed
/// candidate. Either side failing the format check yields `(0, 0)`.
pub fn alignment_reward<J: Judge + ?Sized>(
    clean: &StructuredOutput,
    pert: &StructuredOutput,
    judge: &J,
) -> Result<AlignmentScores, JudgeError> {
    if !(clean.format_ok && pert.format_ok) {
        return Ok(AlignmentScores::default());
    }
    let reason = judge
        .judge(
            JudgeKind::ReasoningConsistency,
            &JudgeInputs::reasoning(&clean.think, &pert.think),
        )?
        .score();
    let answer = judge
        .judge(
            JudgeKind::AnswerConsistency,
            &JudgeInputs::answers(&clean.answer, &pert.answer),
        )?
        .score();
    Ok(AlignmentScores { reason, answer })
}

/// Character-level Levenshtein distance.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            row[j + 1] = if ca == cb {
                diag
            } else {
                1 + diag.min(above).min(row[j])
            };
            diag = above;
        }
    }
    row[b.len()]
}

/// Alignment target under the conditional variant: the clean output when
/// it is correct, otherwise the correct group member whose reasoning is
/// closest in edit distance to the perturbed reasoning (first on ties).
/// `None` when the clean output is wrong and no rollout is correct.
pub fn conditional_target<'a>(
    pert: &StructuredOutput,
    clean: &'a StructuredOutput,
    group: &'a [StructuredOutput],
    truth: &str,
) -> Option<&'a StructuredOutput> {
    if accuracy_reward(clean, truth) == 1.0 {
        return Some(clean);
    }
    group
        .iter()
        .filter(|o| accuracy_reward(o, truth) == 1.0)
        .min_by_key(|o| edit_distance(&o.think, &pert.think))
}

/// Conditional alignment: default alignment against [`conditional_target`],
/// or zero scores when there is no correct rollout to align to.
pub fn conditional_alignment<J: Judge + ?Sized>(
    pert: &StructuredOutput,
    clean: &StructuredOutput,
    group: &[StructuredOutput],
    truth: &str,
    judge: &J,
) -> Result<AlignmentScores, JudgeError> {
    match conditional_target(pert, clean, group, truth) {
        Some(target) => alignment_reward(target, pert, judge),
        None => Ok(AlignmentScores::default()),
    }
}

/// Full reward for one pair. `group` is the clean branch's rollouts and is
/// only consulted by the conditional variants.
pub fn total_reward<J: Judge + ?Sized>(
    clean: &StructuredOutput,
    pert: &StructuredOutput,
    group: &[StructuredOutput],
    truth: &str,
    judge: &J,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let format = if pert.format_ok { 1.0 } else { 0.0 };
    let accuracy = accuracy_reward(pert, truth);
    let fail = |source| RewardError {
        partial: RewardBreakdown::new(format, accuracy, AlignmentScores::default(), cfg),
        source,
    };
    let target = match cfg.variant {
        RewardVariant::Default | RewardVariant::StepLevel => Some(clean),
        RewardVariant::Conditional | RewardVariant::ConditionalPlusStep => {
            conditional_target(pert, clean, group, truth)
        }
    };
    let align = match (target, cfg.variant) {
        (None, _) => AlignmentScores::default(),
        (Some(t), _) if !(t.format_ok && pert.format_ok) => AlignmentScores::default(),
        (Some(t), RewardVariant::Default | RewardVariant::Conditional) => {
            alignment_reward(t, pert, judge).map_err(fail)?
        }
        (Some(t), RewardVariant::StepLevel | RewardVariant::ConditionalPlusStep) => {
            let answer = judge
                .judge(JudgeKind::AnswerConsistency, &JudgeInputs::answers(&t.answer, &pert.answer))
                .map_err(fail)?
                .score();
            let reason = step_level_reward(&t.think, &pert.think, &TokenCountEmbedder::default(), cfg.betas());
            AlignmentScores { reason, answer }
        }
    };
    Ok(RewardBreakdown::new(format, accuracy, align, cfg))
}

//! Group-relative policy optimization on a perturbed branch with a clean
//! anchor, plus a small synthetic task on which the whole loop runs.

pub mod objective;
pub mod policy;
pub mod toy;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::RewardError;

pub use objective::{
    categorical_kl, clip, clipped_term, normalize_advantages, pinsker_bound, surrogate_objective, total_variation,
    unclipped_active,
};
pub use policy::{clip_grad_norm, kl_divergence, objective, objective_gradient, GroupBatch, ObjectiveParts, ToyPolicy};
pub use toy::{toy_sample, ToySample, TOY_ACTIONS, TOY_FEATURES, TOY_FRAMES};
pub use train::{
    evaluate, sample_group, score_group, train_step, update, EvalMetrics, Rollout, RolloutGroup, StepMetrics,
    UpdateStats,
};

#[derive(Debug, Error)]
pub enum GrpoError {
    #[error("group needs at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("reference distribution has zero mass where the policy does not")]
    Support,
    #[error("invalid grpo config: {0}")]
    Config(String),
    #[error("toy task: {0}")]
    Toy(String),
}

/// Failure of one training step. Nothing is mutated when this is returned.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("reward failed: {0}")]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    /// Rollouts per branch per query (G).
    pub group_size: usize,
    /// How many of the clean rollouts see a temporally shuffled clean input.
    pub shuffled_group_size: usize,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    /// Maximum L2 norm of each update's gradient.
    pub grad_clip: f64,
    /// Reward standard deviation below which a group's advantages are zero.
    pub sigma_min: f64,
    pub temperature: f64,
    /// Optimization passes over each batch of rollouts.
    pub ppo_epochs: usize,
    /// Carried for configuration compatibility; single-turn rollouts have no
    /// temporal credit assignment, so no rule reads it.
    pub gae_lambda: f64,
    /// Carried for configuration compatibility; unused for the same reason.
    pub gamma: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub eval_interval: u64,
    pub eval_size: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            shuffled_group_size: 4,
            clip_eps: 0.2,
            kl_beta: 0.01,
            learning_rate: 0.1,
            grad_clip: 1.0,
            sigma_min: 1e-6,
            temperature: 1.0,
            ppo_epochs: 1,
            gae_lambda: 0.95,
            gamma: 0.99,
            batch_size: 8,
            steps: 2000,
            eval_interval: 50,
            eval_size: 256,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::Config(m));
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if self.shuffled_group_size > self.group_size {
            return bad("shuffled_group_size exceeds group_size".into());
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        for (name, v) in [("kl_beta", self.kl_beta), ("sigma_min", self.sigma_min)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip", self.grad_clip),
            ("temperature", self.temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("gae_lambda", self.gae_lambda), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.ppo_epochs == 0 || self.batch_size == 0 || self.eval_interval == 0 || self.eval_size == 0 {
            return bad("ppo_epochs, batch_size, eval_interval and eval_size must be positive".into());
        }
        Ok(())
    }
}

//! Dual-branch rollouts, reward scoring and policy updates on the toy task.
//!
//! Each query yields `G` clean rollouts (the first `shuffled_group_size` of
//! them on a temporally shuffled clean video) and `G` perturbed rollouts.
//! Rewards are computed for the pairs `(o_j, o~_j)` before any parameter
//! changes, and only the perturbed branch enters the objective.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::policy::{clip_grad_norm, objective_gradient, GroupBatch, ObjectiveParts, ToyPolicy};
use super::toy::{features, render_output, ToySample, TOY_FRAMES};
use super::{normalize_advantages, GrpoConfig, GrpoError, TrainError};
use crate::corruption::temporal_shuffle;
use crate::judge::Judge;
use crate::reward::{extract_output, total_reward, RewardBreakdown, RewardConfig, RewardError, StructuredOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub clean_action: usize,
    pub clean_shuffled: bool,
    /// Log-probability of the clean action; recorded, never differentiated.
    pub clean_logprob: f64,
    pub pert_action: usize,
    /// Behaviour-policy log-probability of the perturbed action.
    pub old_logprob: f64,
    pub clean: StructuredOutput,
    pub pert: StructuredOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub query_id: String,
    pub truth: String,
    pub pert_features: Vec<f64>,
    pub rollouts: Vec<Rollout>,
    pub rewards: Vec<RewardBreakdown>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn clean_outputs(&self) -> Vec<StructuredOutput> {
        self.rollouts.iter().map(|r| r.clean.clone()).collect()
    }

    pub fn pert_outputs(&self) -> Vec<StructuredOutput> {
        self.rollouts.iter().map(|r| r.pert.clone()).collect()
    }

    pub fn is_scored(&self) -> bool {
        self.advantages.len() == self.rollouts.len()
    }

    pub fn batch(&self) -> GroupBatch {
        GroupBatch {
            features: self.pert_features.clone(),
            actions: self.rollouts.iter().map(|r| r.pert_action).collect(),
            old_logprobs: self.rollouts.iter().map(|r| r.old_logprob).collect(),
            advantages: self.advantages.clone(),
            clean_logprobs: self.rollouts.iter().map(|r| r.clean_logprob).collect(),
        }
    }
}

/// Draws the dual-branch rollouts for one sample. Rewards are left empty.
pub fn sample_group<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    sample: &ToySample,
    cfg: &GrpoConfig,
    rng: &mut R,
) -> Result<RolloutGroup, GrpoError> {
    let clean_features = features(&sample.clean);
    let pert_features = features(&sample.perturbed);
    let pert_lp = policy.log_probs(&pert_features);
    let mut rollouts = Vec::with_capacity(cfg.group_size);
    for j in 0..cfg.group_size {
        let clean_shuffled = j < cfg.shuffled_group_size;
        let phi = if clean_shuffled {
            let mut perm: Vec<usize> = (0..TOY_FRAMES).collect();
            perm.shuffle(rng);
            let shuffled = temporal_shuffle(&sample.clean, &perm).map_err(|e| GrpoError::Toy(e.to_string()))?;
            features(&shuffled)
        } else {
            clean_features.clone()
        };
        let clean_action = policy.sample(&phi, rng);
        let clean_logprob = policy.log_probs(&phi)[clean_action];
        let pert_action = policy.sample(&pert_features, rng);
        rollouts.push(Rollout {
            clean_action,
            clean_shuffled,
            clean_logprob,
            pert_action,
            old_logprob: pert_lp[pert_action],
            clean: extract_output(&render_output(&phi, clean_action)),
            pert: extract_output(&render_output(&pert_features, pert_action)),
        });
    }
    Ok(RolloutGroup {
        query_id: sample.query_id.clone(),
        truth: sample.truth().to_string(),
        pert_features,
        rollouts,
        rewards: Vec::new(),
        advantages: Vec::new(),
    })
}

/// Fills in rewards and group-normalized advantages.
pub fn score_group<J: Judge + ?Sized>(
    group: &mut RolloutGroup,
    judge: &J,
    reward_cfg: &RewardConfig,
    sigma_min: f64,
) -> Result<(), TrainError> {
    let clean = group.clean_outputs();
    let rewards = group
        .rollouts
        .iter()
        .map(|r| total_reward(&r.clean, &r.pert, &clean, &group.truth, judge, reward_cfg))
        .collect::<Result<Vec<_>, RewardError>>()?;
    let totals: Vec<f64> = rewards.iter().map(|r| r.total).collect();
    group.advantages = normalize_advantages(&totals, sigma_min)?;
    group.rewards = rewards;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Objective terms at the behaviour policy (first epoch).
    pub parts: ObjectiveParts,
    /// Gradient norm before clipping, first epoch.
    pub grad_norm: f64,
}

/// Gradient ascent on the clipped objective over scored groups.
pub fn update(
    policy: &mut ToyPolicy,
    reference: &ToyPolicy,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<UpdateStats, GrpoError> {
    if let Some(g) = groups.iter().find(|g| !g.is_scored()) {
        return Err(GrpoError::Shape(format!("group {} has not been scored", g.query_id)));
    }
    let batches: Vec<GroupBatch> = groups.iter().map(RolloutGroup::batch).collect();
    let mut stats = UpdateStats::default();
    for epoch in 0..cfg.ppo_epochs {
        let (parts, mut grad) = objective_gradient(policy, reference, &batches, cfg.clip_eps, cfg.kl_beta)?;
        let norm = clip_grad_norm(&mut grad, cfg.grad_clip);
        if !norm.is_finite() {
            return Err(GrpoError::NonFinite(format!("gradient norm {norm}")));
        }
        if epoch == 0 {
            stats = UpdateStats { parts, grad_norm: norm };
        }
        for (w, g) in policy.params_mut().iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepMetrics {
    pub groups: usize,
    pub mean_reward: f64,
    pub mean_alignment: f64,
    pub mean_advantage_abs: f64,
    /// Fraction of sampled clean rollouts answering correctly.
    pub clean_accuracy: f64,
    /// Fraction of sampled perturbed rollouts answering correctly.
    pub perturbed_accuracy: f64,
    pub objective: f64,
    pub surrogate: f64,
    pub kl: f64,
    pub grad_norm: f64,
}

impl StepMetrics {
    pub fn from_groups(groups: &[RolloutGroup], stats: UpdateStats) -> Self {
        let mut m = StepMetrics { groups: groups.len(), ..Default::default() };
        let mut n = 0usize;
        for g in groups {
            for ((r, b), a) in g.rollouts.iter().zip(&g.rewards).zip(&g.advantages) {
                n += 1;
                m.mean_advantage_abs += a.abs();
                m.mean_reward += b.total;
                m.mean_alignment += b.align_reason + b.align_answer;
                m.perturbed_accuracy += b.accuracy;
                m.clean_accuracy += crate::reward::accuracy_reward(&r.clean, &g.truth);
            }
        }
        if n > 0 {
            let n = n as f64;
            m.mean_reward /= n;
            m.mean_alignment /= n;
            m.mean_advantage_abs /= n;
            m.clean_accuracy /= n;
            m.perturbed_accuracy /= n;
        }
        m.objective = stats.parts.objective;
        m.surrogate = stats.parts.surrogate;
        m.kl = stats.parts.kl;
        m.grad_norm = stats.grad_norm;
        m
    }
}

/// One full step: rollouts, rewards for every group, then a single update.
/// A reward failure aborts before the policy is touched.
pub fn train_step<J: Judge + ?Sized, R: Rng + ?Sized>(
    policy: &mut ToyPolicy,
    reference: &ToyPolicy,
    samples: &[ToySample],
    judge: &J,
    reward_cfg: &RewardConfig,
    cfg: &GrpoConfig,
    rng: &mut R,
) -> Result<StepMetrics, TrainError> {
    let mut groups = samples
        .iter()
        .map(|s| sample_group(policy, s, cfg, rng))
        .collect::<Result<Vec<_>, _>>()?;
    for g in &mut groups {
        score_group(g, judge, reward_cfg, cfg.sigma_min)?;
    }
    let stats = update(policy, reference, &groups, cfg)?;
    Ok(StepMetrics::from_groups(&groups, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean probability of the correct answer on clean inputs.
    pub clean_accuracy: f64,
    /// Mean probability of the correct answer on perturbed inputs.
    pub perturbed_accuracy: f64,
}

/// Expected accuracy of the sampling policy on a fixed evaluation set.
pub fn evaluate(policy: &ToyPolicy, samples: &[ToySample]) -> EvalMetrics {
    if samples.is_empty() {
        return EvalMetrics::default();
    }
    let mut m = EvalMetrics::default();
    for s in samples {
        m.clean_accuracy += policy.probs(&features(&s.clean))[s.label];
        m.perturbed_accuracy += policy.probs(&features(&s.perturbed))[s.label];
    }
    let n = samples.len() as f64;
    m.clean_accuracy /= n;
    m.perturbed_accuracy /= n;
    m
}

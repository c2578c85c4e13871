//! End-to-end robust-training loop on the toy task.
//!
//! Each step:
//!
//! 1. draw `batch_size` fresh queries and corrupt them;
//! 2. sample clean and perturbed rollout groups for every fresh query and
//!    for every entry promoted by the previous re-evaluation;
//! 3. assess and route each fresh query (discard, train or defer);
//! 4. score the trained groups and apply one dual-branch GRPO update;
//! 5. re-evaluate the memory buffer when due, with fresh rollouts from the
//!    updated policy; promoted entries train on the next step.
//!
//! All randomness comes from one ChaCha8 stream seeded by `grpo.seed`, so a
//! run is a pure function of its configuration when the judge is
//! deterministic.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{
    assess, route, AssessInput, AssessMode, CurriculumConfig, CurriculumError, CurriculumStats, Decision,
    DifficultyVerdict, EvictReason, MemoryBuffer, MemoryEntry, StepCounts,
};
use crate::grpo::toy::QUESTION;
use crate::grpo::{
    evaluate, sample_group, score_group, toy_sample, update, EvalMetrics, GrpoConfig, GrpoError, RolloutGroup,
    StepMetrics, ToyPolicy, ToySample, TrainError, UpdateStats, TOY_ACTIONS, TOY_FEATURES,
};
use crate::judge::Judge;
use crate::reward::RewardConfig;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("step {step}: {source}")]
    Train { step: u64, source: TrainError },
    #[error("step {step}: {source}")]
    Curriculum { step: u64, source: CurriculumError },
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
    pub curriculum: CurriculumConfig,
    pub mode: AssessMode,
    /// Perturbed eval accuracy counted as "converged" in the summary.
    pub target_accuracy: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            grpo: GrpoConfig::default(),
            reward: RewardConfig::default(),
            curriculum: CurriculumConfig::default(),
            mode: AssessMode::Comparison,
            target_accuracy: 0.9,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.grpo.validate()?;
        self.reward.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.curriculum
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Progress notifications, emitted in step order.
#[derive(Debug, Clone, Copy)]
pub enum PipelineEvent<'a> {
    Train {
        step: u64,
        metrics: &'a StepMetrics,
        counts: &'a StepCounts,
        rho: Option<f64>,
        buffer_len: usize,
    },
    Eval {
        step: u64,
        eval: &'a EvalMetrics,
    },
    Reeval {
        step: u64,
        promoted: usize,
        evicted: usize,
        unassessed: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub steps: u64,
    pub final_eval: EvalMetrics,
    pub best_perturbed_accuracy: f64,
    /// First evaluation step at which perturbed accuracy reached the target.
    pub steps_to_target: Option<u64>,
    pub rho_bar: Option<f64>,
    pub totals: StepCounts,
    pub final_buffer_len: usize,
    pub max_buffer_len: usize,
    pub evicted_capacity: u64,
    pub evicted_easy: u64,
    pub evicted_counter: u64,
    pub promoted_trained: u64,
}

pub struct PipelineOutcome {
    pub summary: PipelineSummary,
    pub policy: ToyPolicy,
    pub buffer: MemoryBuffer,
}

fn eval_set(size: usize) -> Result<Vec<ToySample>, GrpoError> {
    (0..size).map(|i| toy_sample(&format!("eval-{i}"))).collect()
}

fn assess_group(
    group: &RolloutGroup,
    sample: &ToySample,
    judge: &dyn Judge,
    mode: AssessMode,
    tau: f64,
) -> Result<DifficultyVerdict, CurriculumError> {
    let clean = group.clean_outputs();
    let pert = group.pert_outputs();
    let input = AssessInput {
        question: QUESTION,
        truth: &group.truth,
        clean: &clean,
        pert: &pert,
        mask_coverage: sample.mask_coverage,
        masked_video: Some(&sample.perturbed),
    };
    assess(&input, Some(judge), mode, tau)
}

/// Runs the full loop for `cfg.grpo.steps` steps.
pub fn run_toy(
    cfg: &PipelineConfig,
    judge: &dyn Judge,
    mut on_event: impl FnMut(PipelineEvent<'_>),
) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let g = &cfg.grpo;
    let cur = &cfg.curriculum;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut policy = ToyPolicy::zeros(TOY_FEATURES, TOY_ACTIONS, g.temperature)?;
    let reference = policy.clone();
    let eval_samples = eval_set(g.eval_size)?;
    let mut buffer = MemoryBuffer::new(cur.buffer_cap);
    let mut stats = CurriculumStats::default();
    let mut summary = PipelineSummary::default();
    let mut promoted_queue: Vec<MemoryEntry> = Vec::new();

    for step in 1..=g.steps {
        let curriculum_err = |source| PipelineError::Curriculum { step, source };
        let train_err = |source| PipelineError::Train { step, source };
        let mut counts = StepCounts::default();
        let mut trained: Vec<RolloutGroup> = Vec::new();

        for entry in std::mem::take(&mut promoted_queue) {
            let sample = toy_sample(&entry.query_id)?;
            trained.push(sample_group(&policy, &sample, g, &mut rng)?);
            summary.promoted_trained += 1;
        }

        for b in 0..g.batch_size {
            let sample = toy_sample(&format!("train-{}-{step}-{b}", g.seed))?;
            let group = sample_group(&policy, &sample, g, &mut rng)?;
            counts.arrivals += 1;
            let verdict = assess_group(&group, &sample, judge, cfg.mode, cur.tau).map_err(curriculum_err)?;
            match route(&verdict, cur.tau) {
                Decision::Discard => counts.discarded += 1,
                Decision::Train => {
                    counts.trained += 1;
                    trained.push(group);
                }
                Decision::Defer => {
                    counts.deferred += 1;
                    let entry = MemoryEntry::new(sample.query_id.clone(), sample.spec.clone(), step);
                    if buffer.defer(entry).map_err(curriculum_err)?.is_some() {
                        counts.evicted += 1;
                        summary.evicted_capacity += 1;
                    }
                }
            }
        }

        for group in &mut trained {
            score_group(group, judge, &cfg.reward, g.sigma_min).map_err(train_err)?;
        }
        let update_stats = if trained.is_empty() {
            UpdateStats::default()
        } else {
            update(&mut policy, &reference, &trained, g)?
        };
        let metrics = StepMetrics::from_groups(&trained, update_stats);

        if buffer.due(step, cur.reeval_period) {
            // Assess everything first so that only judge failures reach the
            // buffer's per-entry error handling.
            let mut verdicts = std::collections::HashMap::new();
            for entry in buffer.entries() {
                let sample = toy_sample(&entry.query_id)?;
                let group = sample_group(&policy, &sample, g, &mut rng)?;
                let verdict = match assess_group(&group, &sample, judge, cfg.mode, cur.tau) {
                    Ok(v) => Ok(v),
                    Err(CurriculumError::Judge(e)) => Err(e),
                    Err(other) => return Err(curriculum_err(other)),
                };
                verdicts.insert(entry.query_id.clone(), verdict);
            }
            let outcome = buffer.reevaluate(cur.max_counter, |entry| {
                verdicts.remove(&entry.query_id).expect("every resident entry was assessed")
            });
            counts.promoted += outcome.promoted.len() as u64;
            counts.evicted += outcome.evicted.len() as u64;
            for (_, reason) in &outcome.evicted {
                match reason {
                    EvictReason::Easy => summary.evicted_easy += 1,
                    EvictReason::Counter => summary.evicted_counter += 1,
                    EvictReason::Capacity => summary.evicted_capacity += 1,
                }
            }
            on_event(PipelineEvent::Reeval {
                step,
                promoted: outcome.promoted.len(),
                evicted: outcome.evicted.len(),
                unassessed: outcome.unassessed,
            });
            promoted_queue = outcome.promoted;
        }

        let rho = stats.record(counts);
        summary.max_buffer_len = summary.max_buffer_len.max(buffer.len());
        on_event(PipelineEvent::Train { step, metrics: &metrics, counts: &counts, rho, buffer_len: buffer.len() });

        if step % g.eval_interval == 0 || step == g.steps {
            let eval = evaluate(&policy, &eval_samples);
            on_event(PipelineEvent::Eval { step, eval: &eval });
            summary.best_perturbed_accuracy = summary.best_perturbed_accuracy.max(eval.perturbed_accuracy);
            if summary.steps_to_target.is_none() && eval.perturbed_accuracy >= cfg.target_accuracy {
                summary.steps_to_target = Some(step);
            }
            summary.final_eval = eval;
        }
    }

    summary.steps = g.steps;
    summary.rho_bar = stats.rho_bar();
    summary.totals = stats.totals;
    summary.final_buffer_len = buffer.len();
    Ok(PipelineOutcome { summary, policy, buffer })
}

//! Analytic training-cost model in units of one forward pass (`C_fwd`).
//!
//! Per-sample forms (the ones the cost ratio is built from):
//!
//! ```text
//! naive = 2 G + 2 c_api + (1 + b) G
//! rova  = 2 G + c_judge + 2 rho c_api + (1 + b) rho G
//! delta = naive - rova = (1 - rho)(2 c_api + (1 + b) G) - c_judge
//! ```
//!
//! with `G = G_total` and `b = c_bwd_factor` (so `(1 + b) G = 1.5 G` at the
//! default `b = 0.5`). `c_pert` is added to both sides only when
//! `include_pert` is set. The coarse approximation `4 / (2.4 + 2 rho)` and
//! the per-step forms with explicit batch size are reported separately.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid cost profile: {0}")]
    Invalid(String),
    #[error("naive cost is zero; ratio undefined")]
    ZeroNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostProfile {
    /// Batch size N.
    pub batch_size: f64,
    /// Rollouts per sample per branch.
    pub group_total: f64,
    /// Backward cost per rollout as a multiple of its forward cost.
    pub c_bwd_factor: f64,
    pub c_judge: f64,
    pub c_api: f64,
    pub c_pert: f64,
    /// Whether `c_pert` enters the per-sample forms and the ratio.
    pub include_pert: bool,
    /// Training ratio (fraction of samples surviving the curriculum).
    pub rho: f64,
    /// Memory buffer size |M|.
    pub buffer_size: f64,
    /// Re-evaluation period T_re.
    pub reeval_period: f64,
    /// Maximum sequence length; informational only.
    pub max_seq_len: Option<u64>,
}

impl Default for CostProfile {
    fn default() -> Self {
        Self {
            batch_size: 16.0,
            group_total: 12.0,
            c_bwd_factor: 0.5,
            c_judge: 0.4,
            c_api: 0.9,
            c_pert: 0.05,
            include_pert: false,
            rho: 0.869,
            buffer_size: 293.0,
            reeval_period: 50.0,
            max_seq_len: None,
        }
    }
}

impl CostProfile {
    pub fn with_rho(&self, rho: f64) -> Self {
        Self { rho, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let nonneg = [
            ("batch_size", self.batch_size),
            ("c_bwd_factor", self.c_bwd_factor),
            ("c_judge", self.c_judge),
            ("c_api", self.c_api),
            ("c_pert", self.c_pert),
            ("buffer_size", self.buffer_size),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CostError::Invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.group_total.is_finite() && self.group_total >= 1.0) {
            return Err(CostError::Invalid(format!("group_total must be >= 1, got {}", self.group_total)));
        }
        check_rho(self.rho)?;
        if !(self.reeval_period.is_finite() && self.reeval_period > 0.0) {
            return Err(CostError::Invalid(format!("reeval_period must be > 0, got {}", self.reeval_period)));
        }
        Ok(())
    }

    fn pert(&self) -> f64 {
        if self.include_pert {
            self.c_pert
        } else {
            0.0
        }
    }

    /// Per-sample cost that curriculum filtering can avoid:
    /// `2 c_api + (1 + b) G`.
    fn filterable(&self) -> f64 {
        2.0 * self.c_api + (1.0 + self.c_bwd_factor) * self.group_total
    }
}

fn check_rho(rho: f64) -> Result<(), CostError> {
    if (0.0..=1.0).contains(&rho) {
        Ok(())
    } else {
        Err(CostError::Invalid(format!("rho must be in [0, 1], got {rho}")))
    }
}

/// Plain GRPO step: `N G (1 + b)`.
pub fn cost_grpo(p: &CostProfile) -> f64 {
    p.batch_size * p.group_total * (1.0 + p.c_bwd_factor)
}

pub fn cost_naive_per_sample(p: &CostProfile) -> f64 {
    p.pert() + 2.0 * p.group_total + p.filterable()
}

pub fn cost_rova_per_sample(p: &CostProfile) -> f64 {
    p.pert() + 2.0 * p.group_total + p.c_judge + p.rho * p.filterable()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRatio {
    pub naive: f64,
    pub rova: f64,
    pub ratio: f64,
    /// Per-sample saving `naive - rova`.
    pub margin: f64,
    pub saves: bool,
}

pub fn cost_ratio(p: &CostProfile) -> Result<CostRatio, CostError> {
    p.validate()?;
    let naive = cost_naive_per_sample(p);
    if naive == 0.0 {
        return Err(CostError::ZeroNaive);
    }
    let rova = cost_rova_per_sample(p);
    let margin = (1.0 - p.rho) * p.filterable() - p.c_judge;
    Ok(CostRatio { naive, rova, ratio: rova / naive, margin, saves: margin > 0.0 })
}

/// Training ratio below which the curriculum saves cost:
/// `1 - c_judge / (2 c_api + (1 + b) G)`.
pub fn rho_threshold(p: &CostProfile) -> f64 {
    1.0 - p.c_judge / p.filterable()
}

/// Coarse speedup `4 / (2.4 + 2 rho)`.
pub fn approx_speedup(rho: f64) -> Result<f64, CostError> {
    check_rho(rho)?;
    Ok(4.0 / (2.4 + 2.0 * rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmortizedReeval {
    /// `|M| c_judge / T_re` per step.
    pub per_step: f64,
    /// `per_step / (N * rova_per_sample)`.
    pub share: f64,
}

pub fn amortized_reeval_cost(p: &CostProfile) -> Result<AmortizedReeval, CostError> {
    p.validate()?;
    let per_step = p.buffer_size * p.c_judge / p.reeval_period;
    let total = p.batch_size * cost_rova_per_sample(p);
    let share = if total > 0.0 { per_step / total } else { 0.0 };
    Ok(AmortizedReeval { per_step, share })
}

/// Per-step costs written term by term with an explicit batch size: the
/// perturbation term is always included and the backward terms use
/// `b * (2 N G)` and `b * (2 rho N G)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStepCosts {
    pub naive: f64,
    /// Without the periodic memory re-evaluation term.
    pub rova: f64,
    /// On a re-evaluation step (adds `|M| c_judge`).
    pub rova_reeval_step: f64,
    pub ratio: f64,
}

pub fn per_step_costs(p: &CostProfile) -> Result<PerStepCosts, CostError> {
    p.validate()?;
    let (n, g, b) = (p.batch_size, p.group_total, p.c_bwd_factor);
    let naive = n * p.c_pert + 2.0 * n * g + 2.0 * n * p.c_api + b * 2.0 * n * g;
    let rova = n * p.c_pert + 2.0 * n * g + n * p.c_judge + 2.0 * p.rho * n * p.c_api + b * 2.0 * p.rho * n * g;
    if naive == 0.0 {
        return Err(CostError::ZeroNaive);
    }
    Ok(PerStepCosts { naive, rova, rova_reeval_step: rova + p.buffer_size * p.c_judge, ratio: rova / naive })
}

/// Converts a cost in `C_fwd` units to seconds.
pub fn to_seconds(cost: f64, seconds_per_fwd: f64) -> f64 {
    cost * seconds_per_fwd
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub profile: CostProfile,
    pub grpo: f64,
    pub per_sample: CostRatio,
    pub rho_threshold: f64,
    /// Coarse `4 / (2.4 + 2 rho)`, labeled separately from the per-sample ratio.
    pub approx_speedup: f64,
    /// `1 / ratio` from the per-sample forms.
    pub per_sample_speedup: f64,
    pub per_step: PerStepCosts,
    pub amortized_reeval: AmortizedReeval,
}

pub fn report(p: &CostProfile) -> Result<CostReport, CostError> {
    let per_sample = cost_ratio(p)?;
    Ok(CostReport {
        profile: p.clone(),
        grpo: cost_grpo(p),
        per_sample,
        rho_threshold: rho_threshold(p),
        approx_speedup: approx_speedup(p.rho)?,
        per_sample_speedup: 1.0 / per_sample.ratio,
        per_step: per_step_costs(p)?,
        amortized_reeval: amortized_reeval_cost(p)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub naive: f64,
    pub rova: f64,
    pub ratio: f64,
    pub margin: f64,
    pub approx_speedup: f64,
    pub per_step_ratio: f64,
}

/// Rows for `rho = 0, 1/steps, ..., 1`.
pub fn sweep(p: &CostProfile, steps: usize) -> Result<Vec<SweepRow>, CostError> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            let rho = i as f64 / steps as f64;
            let q = p.with_rho(rho);
            let r = cost_ratio(&q)?;
            Ok(SweepRow {
                rho,
                naive: r.naive,
                rova: r.rova,
                ratio: r.ratio,
                margin: r.margin,
                approx_speedup: approx_speedup(rho)?,
                per_step_ratio: per_step_costs(&q)?.ratio,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The three published reference values at the default constants.
pub fn reference_checks() -> Result<Vec<ReferenceCheck>, CostError> {
    let p = CostProfile::default();
    let check = |name: &str, value: f64, expected: f64, tolerance: f64| ReferenceCheck {
        name: name.to_string(),
        value,
        expected,
        tolerance,
        pass: (value - expected).abs() <= tolerance,
    };
    Ok(vec![
        check("cost_ratio", cost_ratio(&p)?.ratio, 0.950, 0.001),
        check("approx_speedup(0.6)", approx_speedup(0.6)?, 1.111, 0.005),
        check("amortized_reeval", amortized_reeval_cost(&p)?.per_step, 2.344, 0.01),
    ])
}

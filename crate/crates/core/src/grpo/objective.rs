//! Group-relative advantages, the clipped surrogate and categorical
//! divergences.

use super::GrpoError;

/// Normalizes rewards to zero mean and unit population standard deviation.
/// Groups whose standard deviation is below `sigma_min` carry no signal and
/// map to all zeros.
pub fn normalize_advantages(rewards: &[f64], sigma_min: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::NonFinite(format!("reward {bad}")));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < sigma_min {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// One clipped term `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let unclipped = ratio * advantage;
    let clipped = clip(ratio, 1.0 - eps, 1.0 + eps) * advantage;
    unclipped.min(clipped)
}

/// Whether the unclipped branch is the active minimum, i.e. whether the
/// term has a nonzero derivative with respect to the ratio.
pub fn unclipped_active(ratio: f64, advantage: f64, eps: f64) -> bool {
    if advantage >= 0.0 {
        ratio <= 1.0 + eps
    } else {
        ratio >= 1.0 - eps
    }
}

/// `(1/G) * sum_j min(r_j A_j, clip(r_j) A_j) - beta * kl`.
pub fn surrogate_objective(
    ratios: &[f64],
    advantages: &[f64],
    eps: f64,
    beta: f64,
    kl: f64,
) -> Result<f64, GrpoError> {
    if ratios.len() != advantages.len() || ratios.is_empty() {
        return Err(GrpoError::Shape(format!(
            "{} ratios for {} advantages",
            ratios.len(),
            advantages.len()
        )));
    }
    if let Some(r) = ratios.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(GrpoError::NonFinite(format!("ratio {r}")));
    }
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_term(r, a, eps))
        .sum();
    Ok(sum / ratios.len() as f64 - beta * kl)
}

/// `KL(p || q)` for categorical distributions; terms with `p_k = 0` vanish.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> Result<f64, GrpoError> {
    if p.len() != q.len() {
        return Err(GrpoError::Shape(format!("support sizes {} and {}", p.len(), q.len())));
    }
    let mut kl = 0.0;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk > 0.0 {
            if qk <= 0.0 {
                return Err(GrpoError::Support);
            }
            kl += pk * (pk / qk).ln();
        }
    }
    Ok(kl.max(0.0))
}

/// Total variation distance `0.5 * sum_k |p_k - q_k|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Pinsker's bound `sqrt(KL / 2)` on the total variation distance.
pub fn pinsker_bound(kl: f64) -> f64 {
    (kl / 2.0).sqrt()
}

//! Linear softmax policy over a small answer vocabulary.
//!
//! `pi(k | x) = softmax_k(z)`, `z_k = (sum_i W[i][k] phi_i(x)) / temperature`,
//! where `phi(x)` is the feature vector with a constant 1 appended as bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::objective::{categorical_kl, clipped_term, surrogate_objective, unclipped_active};
use super::GrpoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    features: usize,
    actions: usize,
    temperature: f64,
    /// Row-major `(features + 1) x actions`.
    weights: Vec<f64>,
}

impl ToyPolicy {
    pub fn zeros(features: usize, actions: usize, temperature: f64) -> Result<Self, GrpoError> {
        if actions < 2 {
            return Err(GrpoError::Shape("policy needs at least two actions".into()));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(GrpoError::Config(format!("temperature must be positive, got {temperature}")));
        }
        Ok(Self {
            features,
            actions,
            temperature,
            weights: vec![0.0; (features + 1) * actions],
        })
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn params(&self) -> &[f64] {
        &self.weights
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check(&self, phi: &[f64]) {
        assert_eq!(phi.len(), self.features, "feature vector length");
    }

    pub fn logits(&self, phi: &[f64]) -> Vec<f64> {
        self.check(phi);
        let k = self.actions;
        let mut z = self.weights[self.features * k..].to_vec();
        for (i, &x) in phi.iter().enumerate() {
            if x != 0.0 {
                for (zk, w) in z.iter_mut().zip(&self.weights[i * k..(i + 1) * k]) {
                    *zk += w * x;
                }
            }
        }
        z.iter_mut().for_each(|v| *v /= self.temperature);
        z
    }

    pub fn log_probs(&self, phi: &[f64]) -> Vec<f64> {
        let z = self.logits(phi);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        z.iter().map(|v| v - lse).collect()
    }

    pub fn probs(&self, phi: &[f64]) -> Vec<f64> {
        self.log_probs(phi).into_iter().map(f64::exp).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, phi: &[f64], rng: &mut R) -> usize {
        let p = self.probs(phi);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, pk) in p.iter().enumerate() {
            acc += pk;
            if u < acc {
                return k;
            }
        }
        p.len() - 1
    }

    pub fn greedy(&self, phi: &[f64]) -> usize {
        let z = self.logits(phi);
        (0..z.len()).fold(0, |best, k| if z[k] > z[best] { k } else { best })
    }

    /// Adds `scale * d(z)/d(W)^T dz` to `grad`, i.e. back-propagates a
    /// logit-space gradient `dz` to the weights.
    fn backprop(&self, phi: &[f64], dz: &[f64], scale: f64, grad: &mut [f64]) {
        let k = self.actions;
        let s = scale / self.temperature;
        for (i, &x) in phi.iter().chain(std::iter::once(&1.0)).enumerate() {
            if x != 0.0 {
                for (g, d) in grad[i * k..(i + 1) * k].iter_mut().zip(dz) {
                    *g += s * x * d;
                }
            }
        }
    }
}

/// Numeric content of one rollout group: the perturbed observation, the
/// sampled perturbed actions and their behaviour log-probabilities, and the
/// advantages. Clean-branch log-probabilities are bookkeeping only; they
/// never enter the objective or its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBatch {
    pub features: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_logprobs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub clean_logprobs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveParts {
    /// Mean over groups of the clipped surrogate minus `beta * KL`.
    pub objective: f64,
    /// Mean over groups of the clipped surrogate alone.
    pub surrogate: f64,
    /// Mean over groups of `KL(pi(.|x~) || pi_ref(.|x~))`.
    pub kl: f64,
}

fn group_kl(policy: &ToyPolicy, reference: &ToyPolicy, phi: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64), GrpoError> {
    let lp = policy.log_probs(phi);
    let lq = reference.log_probs(phi);
    let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    let q: Vec<f64> = lq.iter().map(|v| v.exp()).collect();
    // Log-space form is exact for softmax outputs and avoids p/q underflow.
    let kl = p.iter().zip(&lp).zip(&lq).map(|((pk, a), b)| pk * (a - b)).sum::<f64>().max(0.0);
    debug_assert!((kl - categorical_kl(&p, &q).unwrap_or(kl)).abs() < 1e-9);
    Ok((lp, p, kl))
}

fn check_shapes(policy: &ToyPolicy, reference: &ToyPolicy, groups: &[GroupBatch]) -> Result<(), GrpoError> {
    if (policy.features, policy.actions) != (reference.features, reference.actions) {
        return Err(GrpoError::Support);
    }
    if groups.is_empty() {
        return Err(GrpoError::Shape("no groups".into()));
    }
    for g in groups {
        let n = g.actions.len();
        if n == 0 || g.old_logprobs.len() != n || g.advantages.len() != n || g.features.len() != policy.features {
            return Err(GrpoError::Shape("inconsistent group batch".into()));
        }
        if g.actions.iter().any(|&a| a >= policy.actions) {
            return Err(GrpoError::Shape("action out of range".into()));
        }
    }
    Ok(())
}

/// Evaluates the objective without gradients.
pub fn objective(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[GroupBatch],
    eps: f64,
    beta: f64,
) -> Result<ObjectiveParts, GrpoError> {
    check_shapes(policy, reference, groups)?;
    let mut parts = ObjectiveParts::default();
    for g in groups {
        let (lp, _, kl) = group_kl(policy, reference, &g.features)?;
        let ratios: Vec<f64> = g
            .actions
            .iter()
            .zip(&g.old_logprobs)
            .map(|(&a, old)| (lp[a] - old).exp())
            .collect();
        parts.surrogate += surrogate_objective(&ratios, &g.advantages, eps, 0.0, 0.0)?;
        parts.kl += kl;
    }
    let n = groups.len() as f64;
    parts.surrogate /= n;
    parts.kl /= n;
    parts.objective = parts.surrogate - beta * parts.kl;
    Ok(parts)
}

/// Objective and its analytic gradient with respect to the policy weights.
pub fn objective_gradient(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    groups: &[GroupBatch],
    eps: f64,
    beta: f64,
) -> Result<(ObjectiveParts, Vec<f64>), GrpoError> {
    check_shapes(policy, reference, groups)?;
    let n = groups.len() as f64;
    let k = policy.actions;
    let mut grad = vec![0.0; policy.weights.len()];
    let mut parts = ObjectiveParts::default();
    for g in groups {
        let (lp, p, kl) = group_kl(policy, reference, &g.features)?;
        let lq = reference.log_probs(&g.features);
        let size = g.actions.len() as f64;
        let mut dz = vec![0.0; k];
        let mut surrogate = 0.0;
        for ((&a, &old), &adv) in g.actions.iter().zip(&g.old_logprobs).zip(&g.advantages) {
            let ratio = (lp[a] - old).exp();
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(GrpoError::NonFinite(format!("ratio {ratio}")));
            }
            surrogate += clipped_term(ratio, adv, eps);
            if unclipped_active(ratio, adv, eps) {
                // d(r A)/dz = A r (e_a - p)
                let c = adv * ratio / size;
                for (j, d) in dz.iter_mut().enumerate() {
                    *d += c * (f64::from(u8::from(j == a)) - p[j]);
                }
            }
        }
        // dKL/dz_j = p_j (log p_j - log q_j - KL)
        for j in 0..k {
            dz[j] -= beta * p[j] * (lp[j] - lq[j] - kl);
        }
        policy.backprop(&g.features, &dz, 1.0 / n, &mut grad);
        parts.surrogate += surrogate / size;
        parts.kl += kl;
    }
    parts.surrogate /= n;
    parts.kl /= n;
    parts.objective = parts.surrogate - beta * parts.kl;
    Ok((parts, grad))
}

/// Mean exact KL between the policy and the reference over observations.
pub fn kl_divergence(policy: &ToyPolicy, reference: &ToyPolicy, observations: &[Vec<f64>]) -> Result<f64, GrpoError> {
    if (policy.features, policy.actions) != (reference.features, reference.actions) {
        return Err(GrpoError::Support);
    }
    if observations.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for phi in observations {
        total += categorical_kl(&policy.probs(phi), &reference.probs(phi))?;
    }
    Ok(total / observations.len() as f64)
}

/// Scales `grad` down to `max_norm` if its L2 norm exceeds it. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

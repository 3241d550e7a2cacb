//! Epistemic uncertainty: MC-dropout predictive variance of mixed Q-targets,
//! ensemble variance, and the clipped inverse-variance weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::nets::{CriticPair, DropoutMode, MlpParams};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub passes: usize,
    pub noise_var: f64,
}

/// `σ² + (1/T)Σŷ² − (E[ŷ])²`, evaluated with the two-pass centered sum so
/// the result is never negative.
pub fn predictive_variance(samples: &[f64], noise_var: f64) -> Result<UncertaintyEstimate> {
    if samples.len() < 2 {
        return Err(Error::contract(format!(
            "predictive variance needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(noise_var >= 0.0) {
        return Err(Error::contract(format!("noise variance {noise_var} must be >= 0")));
    }
    // two passes over deviations from the first sample, so identical
    // samples give exactly zero
    let n = samples.len() as f64;
    let x0 = samples[0];
    let shift = samples.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - x0 - shift) * (v - x0 - shift)).sum::<f64>() / n;
    let mean = x0 + shift;
    Ok(UncertaintyEstimate {
        mean,
        variance: var + noise_var,
        passes: samples.len(),
        noise_var,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    InverseVariance,
    InverseStd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub beta: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub weighting: Weighting,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            beta: 0.8,
            clip_lo: 0.0,
            clip_hi: 1.5,
            weighting: Weighting::InverseVariance,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.clip_lo < self.clip_hi) || !self.clip_lo.is_finite() || !self.clip_hi.is_finite() {
            return Err(Error::Config(format!(
                "weight clip range ({}, {}) is empty",
                self.clip_lo, self.clip_hi
            )));
        }
        Ok(())
    }
}

/// `clamp(β / v, lo, hi)` with `v` the variance or its square root.
pub fn weight(u: &UncertaintyEstimate, cfg: &WeightConfig) -> f64 {
    weight_from_variance(u.variance, cfg)
}

pub fn weight_from_variance(variance: f64, cfg: &WeightConfig) -> f64 {
    let v = match cfg.weighting {
        Weighting::InverseVariance => variance,
        Weighting::InverseStd => variance.max(0.0).sqrt(),
    };
    if v <= 0.0 {
        return cfg.clip_hi;
    }
    (cfg.beta / v).clamp(cfg.clip_lo, cfg.clip_hi)
}

/// Per-pass dropout seed of critic `k` in pass `t`.
pub fn pass_seed(base: u64, t: usize, k: usize) -> u64 {
    derive_seed(derive_seed(base, t as u64), k as u64)
}

/// λ·min(a, b) + (1−λ)·max(a, b).
pub fn lambda_mix(a: f64, b: f64, lambda: f64) -> f64 {
    lambda * a.min(b) + (1.0 - lambda) * a.max(b)
}

/// `T` stochastic λ-mixed evaluations of the twin critics on every row of
/// `inputs` (state‖action). Returns a `rows × T` matrix.
pub fn mixed_q_passes(q1: &MlpParams, q2: &MlpParams, inputs: &Matrix, lambda: f64, passes: usize, base_seed: u64) -> Result<Matrix> {
    check_lambda(lambda)?;
    let n = inputs.rows();
    let s1: Vec<u64> = (0..passes).map(|t| pass_seed(base_seed, t, 0)).collect();
    let s2: Vec<u64> = (0..passes).map(|t| pass_seed(base_seed, t, 1)).collect();
    let q1 = q1.predict_passes(inputs, &s1)?;
    let q2 = q2.predict_passes(inputs, &s2)?;
    let mut out = Matrix::zeros(n, passes);
    for t in 0..passes {
        for i in 0..n {
            out.set(i, t, lambda_mix(q1.get(t * n + i, 0), q2.get(t * n + i, 0), lambda));
        }
    }
    Ok(out)
}

/// Batched target samples: `next_states` is `B × s`, `candidates` holds `p`
/// actions per state, state-major. Entry `(b, t)` is
/// `max_i [λ·min(Q1', Q2') + (1−λ)·max(Q1', Q2')](s'_b, a_{b,i})` under the
/// dropout masks of pass `t`.
pub fn mc_target_samples_batch(
    q1: &MlpParams,
    q2: &MlpParams,
    next_states: &Matrix,
    candidates: &Matrix,
    p: usize,
    lambda: f64,
    passes: usize,
    base_seed: u64,
) -> Result<Matrix> {
    if p == 0 || passes < 2 {
        return Err(Error::contract(format!("need p >= 1 and T >= 2, got p={p}, T={passes}")));
    }
    let b = next_states.rows();
    if candidates.rows() != b * p {
        return Err(Error::Dimension {
            op: "mc_target_samples",
            left: candidates.shape(),
            right: (b * p, candidates.cols()),
        });
    }
    let inputs = next_states.repeat_rows(p).hconcat(candidates)?;
    let mixed = mixed_q_passes(q1, q2, &inputs, lambda, passes, base_seed)?;
    let mut out = Matrix::filled(b, passes, f64::NEG_INFINITY);
    for row in 0..b * p {
        let dst = out.row_mut(row / p);
        for (o, &v) in dst.iter_mut().zip(mixed.row(row)) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Target samples `{y_t}` for a single next state and its `p` candidate actions.
pub fn mc_target_samples(
    targets: &CriticPair,
    next_state: &[f64],
    candidates: &Matrix,
    lambda: f64,
    passes: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let s = Matrix::row_vector(next_state);
    let out = mc_target_samples_batch(&targets.q1, &targets.q2, &s, candidates, candidates.rows(), lambda, passes, base_seed)?;
    Ok(out.into_vec())
}

/// Per-row estimates from a `rows × T` sample matrix.
pub fn row_estimates(samples: &Matrix, noise_var: f64) -> Result<Vec<UncertaintyEstimate>> {
    (0..samples.rows()).map(|r| predictive_variance(samples.row(r), noise_var)).collect()
}

/// Deterministic member outputs on every row of `inputs`: `rows × K`.
pub fn ensemble_outputs(members: &[MlpParams], inputs: &Matrix) -> Result<Matrix> {
    if members.len() < 2 {
        return Err(Error::contract(format!("ensemble needs K >= 2, got {}", members.len())));
    }
    let mut out = Matrix::zeros(inputs.rows(), members.len());
    for (k, m) in members.iter().enumerate() {
        let q = m.predict(inputs, DropoutMode::Off)?;
        for i in 0..inputs.rows() {
            out.set(i, k, q.get(i, 0));
        }
    }
    Ok(out)
}

/// Variance across `K` deterministic members, one estimate per input row.
pub fn ensemble_variance(members: &[MlpParams], inputs: &Matrix) -> Result<Vec<UncertaintyEstimate>> {
    row_estimates(&ensemble_outputs(members, inputs)?, 0.0)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Activation, Layer, MlpSpec};

    fn constant_net(value: f64, dropout: f64) -> MlpParams {
        let spec = MlpSpec::new(vec![6, 3, 1], Activation::Relu, dropout).unwrap();
        let l0 = Layer::from_parts(Matrix::zeros(3, 6), Matrix::zeros(1, 3)).unwrap();
        let l1 = Layer::from_parts(Matrix::zeros(1, 3), Matrix::scalar(value)).unwrap();
        MlpParams::from_layers(&spec, vec![l0, l1]).unwrap()
    }

    #[test]
    fn variance_examples() {
        assert_eq!(predictive_variance(&[2.0; 5], 0.0).unwrap().variance, 0.0);
        let u = predictive_variance(&[1.0, 3.0], 0.0).unwrap();
        assert_eq!((u.mean, u.variance), (2.0, 1.0));
        assert_eq!(predictive_variance(&[1.0, 3.0], 0.5).unwrap().variance, 1.5);
        assert!(predictive_variance(&[1.0], 0.0).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = |beta, v| {
            let cfg = WeightConfig { beta, ..Default::default() };
            weight_from_variance(v, &cfg)
        };
        assert_eq!(w(0.8, 0.1), 1.5);
        assert!((w(1.6, 4.0) - 0.4).abs() < 1e-15);
        assert_eq!(w(0.8, 0.0), 1.5);
        let std = WeightConfig {
            beta: 1.6,
            weighting: Weighting::InverseStd,
            ..Default::default()
        };
        assert!((weight_from_variance(4.0, &std) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn lambda_mix_of_constant_critics() {
        let pair = CriticPair {
            q1: constant_net(2.0, 0.1),
            q2: constant_net(4.0, 0.1),
        };
        let ys = mc_target_samples(&pair, &[0.0; 4], &Matrix::zeros(1, 2), 0.75, 4, 9).unwrap();
        assert!(ys.iter().all(|&y| (y - 2.5).abs() < 1e-15));
    }

    #[test]
    fn outer_max_over_candidates() {
        // Q depends on the first action component: Q = 2.5 + a0.
        let spec = MlpSpec::new(vec![6, 1, 1], Activation::Relu, 0.0).unwrap();
        let mut w0 = Matrix::zeros(1, 6);
        w0.set(0, 4, 1.0);
        let l0 = Layer::from_parts(w0, Matrix::zeros(1, 1)).unwrap();
        let l1 = Layer::from_parts(Matrix::scalar(1.0), Matrix::scalar(2.5)).unwrap();
        let net = MlpParams::from_layers(&spec, vec![l0, l1]).unwrap();
        let pair = CriticPair { q1: net.clone(), q2: net };
        let cands = Matrix::from_rows(&[&[0.0, 0.0], &[0.5, 0.0]]).unwrap();
        let ys = mc_target_samples(&pair, &[0.0; 4], &cands, 0.75, 3, 1).unwrap();
        assert_eq!(ys, vec![3.0; 3]);
        assert_eq!(predictive_variance(&ys, 0.0).unwrap().variance, 0.0);
    }

    #[test]
    fn ensemble_examples() {
        let members = vec![constant_net(1.0, 0.0), constant_net(3.0, 0.0)];
        let est = ensemble_variance(&members, &Matrix::zeros(2, 6)).unwrap();
        assert_eq!(est[0].variance, 1.0);
        let swapped = vec![members[1].clone(), members[0].clone()];
        assert_eq!(ensemble_variance(&swapped, &Matrix::zeros(2, 6)).unwrap(), est);
        assert!(ensemble_variance(&members[..1], &Matrix::zeros(1, 6)).is_err());
    }
}

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng as ChaRng};

/// Sample distributions for the concentration check. Every variant except
/// `Normal` has bounded support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundedDist {
    Degenerate { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `a` with probability `p`, otherwise `b`.
    TwoPoint { a: f64, b: f64, p: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Mixture { weights: Vec<f64>, components: Vec<BoundedDist> },
    /// Unbounded; always rejected by the check.
    Normal { mean: f64, std: f64 },
}

impl BoundedDist {
    /// `(inf, sup)` of the support, or `None` when unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            BoundedDist::Degenerate { value } => Some((*value, *value)),
            BoundedDist::Uniform { lo, hi } => Some((*lo, *hi)),
            BoundedDist::TwoPoint { a, b, .. } => Some((a.min(*b), a.max(*b))),
            BoundedDist::Discrete { values, .. } => Some((
                values.iter().copied().fold(f64::INFINITY, f64::min),
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )),
            BoundedDist::Mixture { components, .. } => components.iter().try_fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), c| c.support().map(|(a, b)| (lo.min(a), hi.max(b))),
            ),
            BoundedDist::Normal { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        match self {
            BoundedDist::Uniform { lo, hi } if !(hi >= lo) => bad(format!("uniform [{lo}, {hi}] is empty")),
            BoundedDist::TwoPoint { p, .. } if !(0.0..=1.0).contains(p) => bad(format!("two-point p={p}")),
            BoundedDist::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("discrete values/probs mismatch".into());
                }
                check_probs(probs)
            }
            BoundedDist::Mixture { weights, components } => {
                if components.is_empty() || weights.len() != components.len() {
                    return bad("mixture weights/components mismatch".into());
                }
                check_probs(weights)?;
                components.iter().try_for_each(BoundedDist::validate)
            }
            _ => Ok(()),
        }
    }

    /// Exact `(mean, E[X²])`.
    fn moments(&self) -> (f64, f64) {
        match self {
            BoundedDist::Degenerate { value } => (*value, value * value),
            BoundedDist::Uniform { lo, hi } => ((lo + hi) / 2.0, (lo * lo + lo * hi + hi * hi) / 3.0),
            BoundedDist::TwoPoint { a, b, p } => (p * a + (1.0 - p) * b, p * a * a + (1.0 - p) * b * b),
            BoundedDist::Discrete { values, probs } => {
                let z: f64 = probs.iter().sum();
                values.iter().zip(probs).fold((0.0, 0.0), |(m, s), (v, p)| (m + p * v / z, s + p * v * v / z))
            }
            BoundedDist::Mixture { weights, components } => {
                let z: f64 = weights.iter().sum();
                weights.iter().zip(components).fold((0.0, 0.0), |(m, s), (w, c)| {
                    let (cm, cs) = c.moments();
                    (m + w * cm / z, s + w * cs / z)
                })
            }
            BoundedDist::Normal { mean, std } => (*mean, std * std + mean * mean),
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        let (m, s) = self.moments();
        if let BoundedDist::Uniform { lo, hi } = self {
            return (hi - lo) * (hi - lo) / 12.0;
        }
        (s - m * m).max(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            BoundedDist::Degenerate { value } => *value,
            BoundedDist::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(*lo..*hi)
                }
            }
            BoundedDist::TwoPoint { a, b, p } => {
                if rng.random::<f64>() < *p {
                    *a
                } else {
                    *b
                }
            }
            BoundedDist::Discrete { values, probs } => values[pick(probs, rng)],
            BoundedDist::Mixture { weights, components } => components[pick(weights, rng)].sample(rng),
            BoundedDist::Normal { mean, std } => Normal::new(*mean, *std).map(|n| n.sample(rng)).unwrap_or(f64::NAN),
        }
    }
}

fn check_probs(p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || !(p.iter().sum::<f64>() > 0.0) {
        return Err(Error::contract(format!("invalid probabilities {p:?}")));
    }
    Ok(())
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub beta: f64,
    pub k: f64,
    pub q_m: f64,
    /// Threshold `βK` on the weighted deviation.
    pub c: f64,
    pub trials: usize,
    pub mean: f64,
    pub variance: f64,
    pub empirical_probability: f64,
    pub standard_error: f64,
    /// `1/K²`.
    pub bound: f64,
    pub weighted_deviation_mean: f64,
    /// `(1 − 1/K²)·βK + 2·Q_m/K²`.
    pub analytic_cap: f64,
    pub holds_probability: bool,
    pub holds_expectation: bool,
    pub holds: bool,
}

/// Monte-Carlo check of `P(w·|Q − E[Q]| ≥ βK) ≤ 1/K²` with `w = β/√Var[Q]`
/// and of `E[w·|Q − E[Q]|] ≤ (1 − 1/K²)·βK + 2·Q_m/K²`, using the exact
/// mean and variance of `dist`.
pub fn chebyshev_bound_check(dist: &BoundedDist, beta: f64, k: f64, q_m: f64, trials: usize, seed: u64) -> Result<BoundCheckReport> {
    dist.validate()?;
    if !(beta > 0.0) || !(k > 0.0) || !(q_m >= 0.0) || trials == 0 {
        return Err(Error::contract(format!(
            "need beta > 0, K > 0, Q_m >= 0 and trials > 0; got beta={beta}, K={k}, Q_m={q_m}, trials={trials}"
        )));
    }
    let (lo, hi) = dist
        .support()
        .ok_or_else(|| Error::contract("distribution is unbounded"))?;
    if lo < -q_m || hi > q_m {
        return Err(Error::contract(format!("support [{lo}, {hi}] exceeds the bound Q_m = {q_m}")));
    }
    let mean = dist.mean();
    let variance = dist.variance();
    let sd = variance.sqrt();
    let w = if sd > 0.0 { beta / sd } else { 0.0 };
    let c = beta * k;
    let mut rng: ChaRng = rng_from_seed(seed);
    let mut hits = 0usize;
    let mut dev_sum = 0.0;
    for _ in 0..trials {
        let d = w * (dist.sample(&mut rng) - mean).abs();
        if sd > 0.0 && d >= c {
            hits += 1;
        }
        dev_sum += d;
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let bound = 1.0 / (k * k);
    let cap = (1.0 - bound) * beta * k + 2.0 * q_m * bound;
    let weighted_deviation_mean = dev_sum / n;
    let holds_probability = p <= bound + 3.0 * se;
    let holds_expectation = weighted_deviation_mean <= cap;
    Ok(BoundCheckReport {
        beta,
        k,
        q_m,
        c,
        trials,
        mean,
        variance,
        empirical_probability: p,
        standard_error: se,
        bound,
        weighted_deviation_mean,
        analytic_cap: cap,
        holds_probability,
        holds_expectation,
        holds: holds_probability && holds_expectation,
    })
}

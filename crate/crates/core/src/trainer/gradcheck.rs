//! Randomized finite-difference checks of the training losses.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::mmd::{mmd_squared, Estimator, Kernel, MmdConfig};
use crate::ndcore::{grad_check, Matrix};
use crate::nets::{Activation, BoundMlp, BoundPolicy, MlpParams, MlpSpec, PolicyParams, PolicySpec};
use crate::rng::{sub_rng, Rng as ChaRng};
use crate::trainer::agent::{actor_forward, actor_loss, critic_loss};
use crate::trainer::config::{ActorQ, Mode, TrainConfig};

pub const STEP: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseKind {
    Critic,
    Actor,
    Mmd,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub index: usize,
    pub kind: CaseKind,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub cases: Vec<CaseResult>,
    pub max_rel_error: f64,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

fn randn(rows: usize, cols: usize, scale: f64, rng: &mut ChaRng) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_mmd(rng: &mut ChaRng) -> MmdConfig {
    MmdConfig {
        kernel: if rng.random_bool(0.5) { Kernel::Gaussian } else { Kernel::Laplacian },
        sigma: rng.random_range(0.5..3.0),
        estimator: if rng.random_bool(0.5) { Estimator::V } else { Estimator::U },
    }
}

fn critic_case(rng: &mut ChaRng) -> Result<f64> {
    let hidden = rng.random_range(2..6);
    let spec = MlpSpec::new(vec![6, hidden, 1], Activation::Tanh, 0.2)?;
    let k = rng.random_range(1..4);
    let dropout_seed = rng.random_bool(0.5).then(|| rng.random::<u64>());
    let nets: Vec<MlpParams> = (0..k).map(|_| MlpParams::init(&spec, rng)).collect::<Result<_>>()?;
    let b = rng.random_range(1..5);
    let inputs = randn(b, 6, 1.0, rng);
    let z = randn(b, 1, 1.0, rng);
    let w = Matrix::from_vec(b, 1, (0..b).map(|_| rng.random_range(0.0..1.5)).collect())?;
    let params: Vec<Matrix> = nets.iter().flat_map(|n| n.tensors().into_iter().cloned()).collect();
    let per = 2 * spec.num_layers();
    grad_check(
        |g, vars| {
            let bound: Vec<BoundMlp> = vars
                .chunks(per)
                .map(|c| BoundMlp::from_vars(&spec, c))
                .collect::<Result<_>>()?;
            let x = g.constant(inputs.clone());
            critic_loss(g, &bound, x, &z, &w, dropout_seed)
        },
        &params,
        STEP,
    )
}

fn actor_case(rng: &mut ChaRng) -> Result<f64> {
    let pspec = PolicySpec {
        state_dim: 4,
        hidden: vec![rng.random_range(2..5)],
        action_dim: 2,
        activation: Activation::Tanh,
    };
    let policy = PolicyParams::init(&pspec, rng)?;
    let ensemble = rng.random_bool(0.25);
    let cspec = MlpSpec::new(vec![6, 4, 1], Activation::Tanh, 0.0)?;
    let k = if ensemble { 3 } else { 2 };
    let critics: Vec<MlpParams> = (0..k).map(|_| MlpParams::init(&cspec, rng)).collect::<Result<_>>()?;
    let b = 2;
    let m = rng.random_range(2..4);
    let n = rng.random_range(2..4);
    let cfg = TrainConfig {
        mode: if ensemble { Mode::UwacEnsemble } else { Mode::Uwac },
        actor_q: [ActorQ::Q1, ActorQ::Min, ActorQ::Mix][rng.random_range(0..3)],
        lambda: rng.random_range(0.0..1.0),
        alpha: rng.random_range(0.1..10.0),
        m,
        n,
        mmd: random_mmd(rng),
        ..TrainConfig::default()
    };
    let states = randn(b, 4, 0.7, rng);
    let noise = randn(b * m, 2, 1.0, rng);
    let data_actions = randn(b * n, 2, 0.5, rng).map(f64::tanh);
    let w = Matrix::from_vec(b * m, 1, (0..b * m).map(|_| rng.random_range(0.0..1.5)).collect())?;
    let params: Vec<Matrix> = policy.tensors().into_iter().cloned().collect();
    grad_check(
        |g, vars| {
            let pol = BoundPolicy::from_vars(&pspec, vars)?;
            let bound: Vec<BoundMlp> = critics.iter().map(|c| c.bind(g, false)).collect();
            let fwd = actor_forward(g, &pol, &bound, &states, &noise, m, cfg.mode, cfg.actor_q, cfg.lambda)?;
            Ok(actor_loss(g, &fwd, &w, &data_actions, &cfg)?.0)
        },
        &params,
        STEP,
    )
}

fn mmd_case(rng: &mut ChaRng) -> Result<f64> {
    let cfg = random_mmd(rng);
    let m = rng.random_range(2..8);
    let n = rng.random_range(2..8);
    let d = rng.random_range(1..4);
    let x = randn(m, d, 1.0, rng);
    let y = randn(n, d, 1.0, rng);
    grad_check(
        |g, vars| {
            let v = mmd_squared(g, vars[0], &y, &cfg)?;
            Ok(g.sum(v))
        },
        &[x],
        STEP,
    )
}

/// Runs `count` cases cycling critic, actor and MMD losses; case `i` draws
/// from `sub_rng(seed, i)`.
pub fn gradcheck_suite(seed: u64, count: usize) -> Result<GradcheckReport> {
    let mut cases = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = sub_rng(seed, i as u64);
        let (kind, err) = match i % 3 {
            0 => (CaseKind::Critic, critic_case(&mut rng)?),
            1 => (CaseKind::Actor, actor_case(&mut rng)?),
            _ => (CaseKind::Mmd, mmd_case(&mut rng)?),
        };
        cases.push(CaseResult {
            index: i,
            kind,
            rel_error: err,
        });
    }
    let max_rel_error = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        cases,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = gradcheck_suite(3, 12).unwrap();
        assert!(r.passed(1e-4), "{:?}", r.cases);
    }
}

//! Tanh-squashed Gaussian policy.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::graph::softplus;
use crate::ndcore::{Graph, Matrix, Var};
use crate::nets::mlp::{soft_update_tensor, Activation, Layer};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub state_dim: usize,
    pub hidden: Vec<usize>,
    pub action_dim: usize,
    pub activation: Activation,
}

impl PolicySpec {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) || self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Config(format!("invalid policy architecture {self:?}")));
        }
        Ok(())
    }

    fn trunk_widths(&self) -> Vec<usize> {
        std::iter::once(self.state_dim).chain(self.hidden.iter().copied()).collect()
    }
}

/// Policy weights: an activated trunk plus linear mean and log-std heads.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    spec: PolicySpec,
    trunk: Vec<Layer>,
    mean_head: Layer,
    log_std_head: Layer,
}

/// `log(1 − tanh(u)²)` without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(spec: &PolicySpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let trunk = spec.trunk_widths().windows(2).map(|w| Layer::init(w[0], w[1], rng)).collect();
        let h = *spec.hidden.last().expect("validated");
        Ok(Self {
            spec: spec.clone(),
            trunk,
            mean_head: Layer::init(h, spec.action_dim, rng),
            log_std_head: Layer::init(h, spec.action_dim, rng),
        })
    }

    /// Layers in checkpoint order: trunk, mean head, log-std head.
    pub fn from_layers(spec: &PolicySpec, mut layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let widths = spec.trunk_widths();
        if layers.len() != widths.len() + 1 {
            return Err(Error::Config(format!(
                "policy expects {} layers, found {}",
                widths.len() + 1,
                layers.len()
            )));
        }
        let log_std_head = layers.pop().expect("len checked");
        let mean_head = layers.pop().expect("len checked");
        let h = *spec.hidden.last().expect("validated");
        for (l, (layer, w)) in layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[1], w[0]) {
                return Err(Error::Config(format!("policy trunk layer {l} has shape {:?}", layer.weight.shape())));
            }
        }
        for head in [&mean_head, &log_std_head] {
            if head.weight.shape() != (spec.action_dim, h) {
                return Err(Error::Config(format!("policy head has shape {:?}", head.weight.shape())));
            }
        }
        Ok(Self {
            spec: spec.clone(),
            trunk: layers,
            mean_head,
            log_std_head,
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn layers(&self) -> Vec<&Layer> {
        self.trunk.iter().chain([&self.mean_head, &self.log_std_head]).collect()
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers().into_iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.trunk
            .iter_mut()
            .chain([&mut self.mean_head, &mut self.log_std_head])
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.tensors().iter().map(|m| m.shape()).collect()
    }

    pub fn labels(&self, prefix: &str) -> Vec<String> {
        let n = self.trunk.len();
        (0..n + 2)
            .flat_map(|l| {
                let name = match l {
                    l if l < n => format!("{prefix}.trunk{l}"),
                    l if l == n => format!("{prefix}.mean"),
                    _ => format!("{prefix}.log_std"),
                };
                [format!("{name}.weight"), format!("{name}.bias")]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|m| m.is_finite())
    }

    /// Mean and clamped log-std for a batch of states.
    pub fn heads(&self, states: &Matrix) -> Result<(Matrix, Matrix)> {
        if states.cols() != self.spec.state_dim {
            return Err(Error::Dimension {
                op: "policy",
                left: states.shape(),
                right: (states.rows(), self.spec.state_dim),
            });
        }
        let mut h = states.clone();
        for layer in &self.trunk {
            h = layer.forward(&h);
            let act = self.spec.activation;
            h.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        }
        let mean = self.mean_head.forward(&h);
        let log_std = self.log_std_head.forward(&h).map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        Ok((mean, log_std))
    }

    /// Deterministic action `tanh(μ(s))` for each row.
    pub fn mean_action(&self, states: &Matrix) -> Result<Matrix> {
        Ok(self.heads(states)?.0.map(f64::tanh))
    }

    /// `per_state` reparameterized samples for every state, state-major:
    /// rows `[i·k, (i+1)·k)` belong to state `i`.
    pub fn sample_actions<R: Rng + ?Sized>(&self, states: &Matrix, per_state: usize, rng: &mut R) -> Result<Matrix> {
        let (mean, log_std) = self.heads(states)?;
        let d = self.spec.action_dim;
        let mut out = Matrix::zeros(states.rows() * per_state, d);
        for i in 0..states.rows() {
            for k in 0..per_state {
                let row = out.row_mut(i * per_state + k);
                for j in 0..d {
                    let eps: f64 = rng.sample(StandardNormal);
                    row[j] = (mean.get(i, j) + log_std.get(i, j).exp() * eps).tanh();
                }
            }
        }
        Ok(out)
    }

    /// One action and its log-density for a single state.
    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let (mean, log_std) = self.heads(&Matrix::row_vector(state))?;
        let eps: Vec<f64> = (0..self.spec.action_dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut action = Vec::with_capacity(eps.len());
        let mut logp = 0.0;
        for (j, &e) in eps.iter().enumerate() {
            let ls = log_std.get(0, j);
            let u = mean.get(0, j) + ls.exp() * e;
            action.push(u.tanh());
            logp += -0.5 * e * e - ls - HALF_LN_2PI - log_one_minus_tanh_sq(u);
        }
        Ok((action, logp))
    }

    /// Log-density of a given squashed action (components strictly inside (−1, 1)).
    pub fn log_density(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.heads(&Matrix::row_vector(state))?;
        if action.len() != self.spec.action_dim {
            return Err(Error::Dimension {
                op: "log_density",
                left: (1, action.len()),
                right: (1, self.spec.action_dim),
            });
        }
        let mut logp = 0.0;
        for (j, &a) in action.iter().enumerate() {
            if !(a > -1.0 && a < 1.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let u = a.atanh();
            let ls = log_std.get(0, j);
            let sigma = ls.exp();
            let z = (u - mean.get(0, j)) / sigma;
            logp += -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln() - log_one_minus_tanh_sq(u);
        }
        Ok(logp)
    }

    pub fn bind(&self, g: &mut Graph) -> BoundPolicy {
        let vars = self.tensors().into_iter().map(|m| g.param(m.clone())).collect();
        BoundPolicy {
            spec: self.spec.clone(),
            vars,
        }
    }
}

/// A [`PolicyParams`] registered in a graph.
#[derive(Clone, Debug)]
pub struct BoundPolicy {
    spec: PolicySpec,
    vars: Vec<Var>,
}

/// Differentiable policy samples.
#[derive(Clone, Copy, Debug)]
pub struct PolicySample {
    pub actions: Var,
    pub log_prob: Var,
}

impl BoundPolicy {
    /// Wraps existing graph leaves in [`PolicyParams::tensors`] order.
    pub fn from_vars(spec: &PolicySpec, vars: &[Var]) -> Result<Self> {
        let expected = 2 * (spec.hidden.len() + 2);
        if vars.len() != expected {
            return Err(Error::contract(format!("expected {expected} policy vars, got {}", vars.len())));
        }
        Ok(Self {
            spec: spec.clone(),
            vars: vars.to_vec(),
        })
    }

    /// Reparameterized samples `tanh(μ + σ·ε)` for `states` (B × s) with one
    /// noise row per sample; `noise` has `B·per_state` rows, state-major.
    pub fn sample(&self, g: &mut Graph, states: Var, noise: &Matrix, per_state: usize) -> Result<PolicySample> {
        let b = g.value(states).rows();
        if noise.rows() != b * per_state || noise.cols() != self.spec.action_dim {
            return Err(Error::Dimension {
                op: "policy_sample",
                left: noise.shape(),
                right: (b * per_state, self.spec.action_dim),
            });
        }
        let n_trunk = self.vars.len() / 2 - 2;
        let mut h = states;
        for l in 0..n_trunk {
            h = g.affine(h, self.vars[2 * l], self.vars[2 * l + 1])?;
            h = self.spec.activation.apply_graph(g, h);
        }
        let mean = g.affine(h, self.vars[2 * n_trunk], self.vars[2 * n_trunk + 1])?;
        let raw_ls = g.affine(h, self.vars[2 * n_trunk + 2], self.vars[2 * n_trunk + 3])?;
        let log_std = g.clamp(raw_ls, LOG_STD_MIN, LOG_STD_MAX);
        let idx: Vec<usize> = (0..b).flat_map(|i| std::iter::repeat_n(i, per_state)).collect();
        let mean_r = g.gather_rows(mean, idx.clone())?;
        let ls_r = g.gather_rows(log_std, idx)?;
        let sigma = g.exp(ls_r);
        let eps = g.constant(noise.clone());
        let spread = g.mul(sigma, eps)?;
        let pre = g.add(mean_r, spread)?;
        let actions = g.tanh(pre);

        // log π = Σ_j [−ε²/2 − log σ − ln(2π)/2 − log(1 − tanh²u)]
        let base = noise.map(|e| -0.5 * e * e - HALF_LN_2PI);
        let base = g.constant(base);
        let gauss = g.sub(base, ls_r)?;
        let m2u = g.scale(pre, -2.0);
        let sp = g.softplus(m2u);
        let u_plus_sp = g.add(pre, sp)?;
        let neg = g.scale(u_plus_sp, -2.0);
        let corr = g.add_scalar(neg, 2.0 * LN_2);
        let per_dim = g.sub(gauss, corr)?;
        let log_prob = g.row_sum(per_dim);
        Ok(PolicySample { actions, log_prob })
    }

    pub fn grads(&self, g: &Graph) -> Vec<Matrix> {
        self.vars.iter().map(|&v| g.grad(v)).collect()
    }
}

/// Soft update for policies.
pub fn soft_update_policy(target: &mut PolicyParams, online: &PolicyParams, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::contract(format!("soft update rate {tau} outside (0, 1]")));
    }
    if target.shapes() != online.shapes() {
        return Err(Error::contract("soft update between mismatched policies"));
    }
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        soft_update_tensor(t, o, tau);
    }
    Ok(())
}

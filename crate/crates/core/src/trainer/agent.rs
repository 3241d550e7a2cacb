use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::env::{Dataset, Transition, ACTION_DIM, STATE_DIM};
use crate::error::{Error, Result};
use crate::mmd::mmd_squared_batch;
use crate::ndcore::{AdamState, Graph, Matrix, Var};
use crate::rng::derive_seed;
use crate::nets::{soft_update, soft_update_policy, BoundMlp, BoundPolicy, DropoutMode, MlpParams, MlpSpec, PolicyParams, PolicySpec};
use crate::trainer::config::{ActorQ, Mode, TrainConfig};
use crate::uncertainty::{ensemble_outputs, mc_target_samples_batch, mixed_q_passes, row_estimates, weight_from_variance};

/// Power iterations run once when spectral norm is switched on, so the
/// per-step iterations start from a converged vector.
const SPECTRAL_WARMUP: usize = 50;

/// A minibatch in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
}

/// Flat record used when dumping a batch that produced non-finite values.
#[derive(Serialize)]
struct DumpRow<'a> {
    s: &'a [f64],
    a: &'a [f64],
    r: f64,
    next: &'a [f64],
    done: bool,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        if ts.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let mut states = Vec::with_capacity(ts.len() * STATE_DIM);
        let mut actions = Vec::with_capacity(ts.len() * ACTION_DIM);
        let mut next = Vec::with_capacity(ts.len() * STATE_DIM);
        for t in ts {
            states.extend(t.s.to_array());
            actions.extend(t.a.thrust);
            next.extend(t.next.to_array());
        }
        Ok(Self {
            states: Matrix::from_vec(ts.len(), STATE_DIM, states)?,
            actions: Matrix::from_vec(ts.len(), ACTION_DIM, actions)?,
            rewards: ts.iter().map(|t| t.r).collect(),
            next_states: Matrix::from_vec(ts.len(), STATE_DIM, next)?,
            dones: ts.iter().map(|t| t.done).collect(),
        })
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(d: &Dataset, size: usize, rng: &mut R) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::contract("cannot sample from an empty dataset"));
        }
        let picks: Vec<Transition> = (0..size).map(|_| d.transitions[rng.random_range(0..d.len())]).collect();
        Self::from_transitions(&picks)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<DumpRow> = (0..self.len())
            .map(|i| DumpRow {
                s: self.states.row(i),
                a: self.actions.row(i),
                r: self.rewards[i],
                next: self.next_states.row(i),
                done: self.dones[i],
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("batch serializes")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticStats {
    pub loss: f64,
    pub weight_mean: f64,
    pub var_mean: f64,
    pub q_target_mean: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub mmd_mean: f64,
    pub weight_mean: f64,
}

/// Critic loss `(1/K) Σ_k mean_b w_b·(Q_k(s_b, a_b) − z_b)²`. `w` and `z`
/// enter as constants. With `dropout_seed`, critic `k` runs with masks from
/// `derive_seed(seed, k)`.
pub fn critic_loss(
    g: &mut Graph,
    critics: &[BoundMlp],
    inputs: Var,
    z: &Matrix,
    w: &Matrix,
    dropout_seed: Option<u64>,
) -> Result<Var> {
    let zc = g.constant(z.clone());
    let mut total: Option<Var> = None;
    for (k, c) in critics.iter().enumerate() {
        let mode = match dropout_seed {
            Some(seed) => DropoutMode::Sampled(derive_seed(seed, k as u64)),
            None => DropoutMode::Off,
        };
        let q = c.forward(g, inputs, mode)?;
        let d = g.sub(q, zc)?;
        let sq = g.square(d);
        let weighted = g.mul_const(sq, w.clone())?;
        let l = g.mean(weighted)?;
        total = Some(match total {
            Some(t) => g.add(t, l)?,
            None => l,
        });
    }
    let total = total.ok_or_else(|| Error::contract("critic loss needs at least one critic"))?;
    Ok(g.scale(total, 1.0 / critics.len() as f64))
}

/// Differentiable part of the actor objective up to the weights: the
/// policy actions and the Q value the actor maximizes.
pub struct ActorForward {
    pub actions: Var,
    pub inputs: Var,
    pub q: Var,
}

pub fn actor_forward(
    g: &mut Graph,
    policy: &BoundPolicy,
    critics: &[BoundMlp],
    states: &Matrix,
    noise: &Matrix,
    m: usize,
    mode: Mode,
    actor_q: ActorQ,
    lambda: f64,
) -> Result<ActorForward> {
    let s = g.constant(states.clone());
    let sample = policy.sample(g, s, noise, m)?;
    let srep = g.constant(states.repeat_rows(m));
    let inputs = g.concat_cols(srep, sample.actions)?;
    let qs: Vec<Var> = critics
        .iter()
        .map(|c| c.forward(g, inputs, DropoutMode::Off))
        .collect::<Result<_>>()?;
    let q = if mode == Mode::UwacEnsemble {
        let mut acc = qs[0];
        for &q in &qs[1..] {
            acc = g.add(acc, q)?;
        }
        g.scale(acc, 1.0 / qs.len() as f64)
    } else {
        match actor_q {
            ActorQ::Q1 => qs[0],
            ActorQ::Min => g.min(qs[0], qs[1])?,
            ActorQ::Mix => {
                let lo = g.min(qs[0], qs[1])?;
                let hi = g.max(qs[0], qs[1])?;
                let lo = g.scale(lo, lambda);
                let hi = g.scale(hi, 1.0 - lambda);
                g.add(lo, hi)?
            }
        }
    };
    Ok(ActorForward {
        actions: sample.actions,
        inputs,
        q,
    })
}

/// `mean[−w·Q] + α·mean_b mmd²_b`. Returns `(loss, mmd mean)`.
pub fn actor_loss(
    g: &mut Graph,
    fwd: &ActorForward,
    w: &Matrix,
    data_actions: &Matrix,
    cfg: &TrainConfig,
) -> Result<(Var, Var)> {
    let neg_w = w.scaled(-1.0);
    let wq = g.mul_const(fwd.q, neg_w)?;
    let q_term = g.mean(wq)?;
    let mmd = mmd_squared_batch(g, fwd.actions, cfg.m, data_actions, cfg.n, &cfg.mmd)?;
    let mmd_mean = g.mean(mmd)?;
    let pen = g.scale(mmd_mean, cfg.alpha);
    Ok((g.add(q_term, pen)?, mmd_mean))
}

/// Online and target networks plus optimizer state.
#[derive(Clone, Debug)]
pub struct Agent {
    pub config: TrainConfig,
    pub critics: Vec<MlpParams>,
    pub target_critics: Vec<MlpParams>,
    pub policy: PolicyParams,
    pub target_policy: PolicyParams,
    critic_opts: Vec<AdamState>,
    actor_opt: AdamState,
}

impl Agent {
    pub fn critic_spec(cfg: &TrainConfig) -> Result<MlpSpec> {
        let mut widths = vec![STATE_DIM + ACTION_DIM];
        widths.extend(&cfg.critic_hidden);
        widths.push(1);
        MlpSpec::new(widths, cfg.activation, cfg.dropout)
    }

    pub fn policy_spec(cfg: &TrainConfig) -> PolicySpec {
        PolicySpec {
            state_dim: STATE_DIM,
            hidden: cfg.actor_hidden.clone(),
            action_dim: ACTION_DIM,
            activation: cfg.activation,
        }
    }

    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let spec = Self::critic_spec(cfg)?;
        let mut critics = (0..cfg.num_critics())
            .map(|_| MlpParams::init(&spec, rng))
            .collect::<Result<Vec<_>>>()?;
        if cfg.spectral_norm {
            for c in &mut critics {
                c.enable_spectral(rng);
                c.spectral_project(SPECTRAL_WARMUP.max(cfg.spectral_iterations))?;
            }
        }
        let policy = PolicyParams::init(&Self::policy_spec(cfg), rng)?;
        Self::from_parts(cfg, critics, policy)
    }

    /// Builds an agent around existing networks; targets start as copies.
    pub fn from_parts(cfg: &TrainConfig, critics: Vec<MlpParams>, policy: PolicyParams) -> Result<Self> {
        if critics.len() != cfg.num_critics() {
            return Err(Error::Config(format!(
                "mode {:?} needs {} critics, got {}",
                cfg.mode,
                cfg.num_critics(),
                critics.len()
            )));
        }
        let critic_opts = critics
            .iter()
            .enumerate()
            .map(|(k, c)| AdamState::new(&c.shapes(), cfg.critic_lr).with_labels(c.labels(&format!("critic{k}"))))
            .collect();
        let actor_opt = AdamState::new(&policy.shapes(), cfg.actor_lr).with_labels(policy.labels("actor"));
        Ok(Self {
            config: cfg.clone(),
            target_critics: critics.iter().map(|c| c.clone().without_spectral()).collect(),
            target_policy: policy.clone(),
            critics,
            policy,
            critic_opts,
            actor_opt,
        })
    }

    /// Mean target `ȳ` and its variance for every next state in the batch.
    pub fn target_estimates<R: Rng + ?Sized>(&self, next_states: &Matrix, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let cfg = &self.config;
        let p = cfg.p;
        let candidates = self.target_policy.sample_actions(next_states, p, rng)?;
        let samples = if cfg.mode == Mode::UwacEnsemble {
            let inputs = next_states.repeat_rows(p).hconcat(&candidates)?;
            let per_member = ensemble_outputs(&self.target_critics, &inputs)?;
            let k = self.target_critics.len();
            let mut out = Matrix::filled(next_states.rows(), k, f64::NEG_INFINITY);
            for row in 0..inputs.rows() {
                let dst = out.row_mut(row / p);
                for (o, &v) in dst.iter_mut().zip(per_member.row(row)) {
                    *o = o.max(v);
                }
            }
            out
        } else {
            let seed: u64 = rng.random();
            mc_target_samples_batch(
                &self.target_critics[0],
                &self.target_critics[1],
                next_states,
                &candidates,
                p,
                cfg.lambda,
                cfg.passes,
                seed,
            )?
        };
        let est = row_estimates(&samples, cfg.noise_var)?;
        Ok((est.iter().map(|e| e.mean).collect(), est.iter().map(|e| e.variance).collect()))
    }

    fn weights_for(&self, variances: &[f64]) -> Matrix {
        let wc = self.config.weight_config();
        let w: Vec<f64> = variances
            .iter()
            .map(|&v| if self.config.mode.weighted() { weight_from_variance(v, &wc) } else { 1.0 })
            .collect();
        Matrix::column(&w)
    }

    /// One critic step. Returns the loss before the update.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<CriticStats> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let cfg = self.config.clone();
        let (ybar, var) = self.target_estimates(&batch.next_states, rng)?;
        let z: Vec<f64> = (0..batch.len())
            .map(|i| batch.rewards[i] + if batch.dones[i] { 0.0 } else { cfg.gamma * ybar[i] })
            .collect();
        let w = self.weights_for(&var);
        let z = Matrix::column(&z);

        let mut g = Graph::new();
        let inputs = g.constant(batch.states.hconcat(&batch.actions)?);
        let bound: Vec<BoundMlp> = self.critics.iter().map(|c| c.bind(&mut g, true)).collect();
        let dropout_seed = cfg.train_dropout.then(|| rng.random::<u64>());
        let loss = critic_loss(&mut g, &bound, inputs, &z, &w, dropout_seed)?;
        let loss_value = g.scalar(loss)?;
        if !loss_value.is_finite() {
            return Err(Error::numeric(format!("critic loss is {loss_value}")));
        }
        g.backward(loss)?;
        for ((critic, b), opt) in self.critics.iter_mut().zip(&bound).zip(&mut self.critic_opts) {
            let grads = critic.trainable_grads(b.grads(&g));
            opt.step(&mut critic.trainable_mut(), &grads)?;
            if cfg.spectral_norm {
                critic.spectral_project(cfg.spectral_iterations)?;
            }
        }
        let n = batch.len() as f64;
        Ok(CriticStats {
            loss: loss_value,
            weight_mean: w.mean(),
            var_mean: var.iter().sum::<f64>() / n,
            q_target_mean: z.mean(),
        })
    }

    /// Per-row actor weights from the online critics at the given inputs.
    pub fn actor_weights(&self, inputs: &Matrix, seed: u64) -> Result<Matrix> {
        let cfg = &self.config;
        match cfg.mode {
            Mode::BearBaseline => Ok(Matrix::filled(inputs.rows(), 1, 1.0)),
            Mode::Uwac => {
                let samples = mixed_q_passes(&self.critics[0], &self.critics[1], inputs, cfg.lambda, cfg.passes, seed)?;
                let var: Vec<f64> = row_estimates(&samples, cfg.noise_var)?.iter().map(|e| e.variance).collect();
                Ok(self.weights_for(&var))
            }
            Mode::UwacEnsemble => {
                let outs = ensemble_outputs(&self.critics, inputs)?;
                let var: Vec<f64> = row_estimates(&outs, cfg.noise_var)?.iter().map(|e| e.variance).collect();
                Ok(self.weights_for(&var))
            }
        }
    }

    /// One actor step on `φ`. Dataset actions for the MMD term are the batch
    /// action of each state repeated `n` times.
    pub fn actor_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<ActorStats> {
        if batch.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        let cfg = self.config.clone();
        let b = batch.len();
        let noise_data: Vec<f64> = (0..b * cfg.m * ACTION_DIM).map(|_| rng.sample(StandardNormal)).collect();
        let noise = Matrix::from_vec(b * cfg.m, ACTION_DIM, noise_data)?;
        let seed: u64 = rng.random();

        let mut g = Graph::new();
        let policy = self.policy.bind(&mut g);
        let critics: Vec<BoundMlp> = self.critics.iter().map(|c| c.bind(&mut g, false)).collect();
        let fwd = actor_forward(&mut g, &policy, &critics, &batch.states, &noise, cfg.m, cfg.mode, cfg.actor_q, cfg.lambda)?;
        let w = self.actor_weights(g.value(fwd.inputs), seed)?;
        let data_actions = batch.actions.repeat_rows(cfg.n);
        let (loss, mmd) = actor_loss(&mut g, &fwd, &w, &data_actions, &cfg)?;
        let loss_value = g.scalar(loss)?;
        if !loss_value.is_finite() {
            return Err(Error::numeric(format!("actor loss is {loss_value}")));
        }
        let mmd_value = g.scalar(mmd)?;
        g.backward(loss)?;
        let grads = policy.grads(&g);
        self.actor_opt.step(&mut self.policy.tensors_mut(), &grads)?;
        Ok(ActorStats {
            loss: loss_value,
            mmd_mean: mmd_value,
            weight_mean: w.mean(),
        })
    }

    /// Polyak update of every target network.
    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.config.tau;
        for (t, o) in self.target_critics.iter_mut().zip(&self.critics) {
            soft_update(t, o, tau)?;
        }
        soft_update_policy(&mut self.target_policy, &self.policy, tau)
    }

    pub fn is_finite(&self) -> bool {
        self.critics.iter().chain(&self.target_critics).all(MlpParams::is_finite)
            && self.policy.is_finite()
            && self.target_policy.is_finite()
    }

    pub fn critic_optimizers(&self) -> &[AdamState] {
        &self.critic_opts
    }
}

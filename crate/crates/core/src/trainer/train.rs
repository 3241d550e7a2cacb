use crate::env::{behavior_policy, random_policy, rollout, Dataset, EnvConfig, Lander, LanderAction, LanderState, PdGains};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::nets::PolicyParams;
use crate::rng::{derive_seed, rng_from_seed, sub_rng, Rng};
use crate::trainer::agent::{Agent, Batch};
use crate::trainer::config::TrainConfig;
use crate::trainer::metrics::MetricsRow;

const INIT_STREAM: u64 = 0;
const STEP_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// Mean undiscounted return of an arbitrary controller; episode `i` starts
/// from the reset drawn by `sub_rng(seed, i)`.
pub fn evaluate_controller<F>(env: &EnvConfig, episodes: usize, seed: u64, mut controller: F) -> Result<f64>
where
    F: FnMut(&LanderState, &mut Rng) -> LanderAction,
{
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let lander = Lander::new(env.clone())?;
    let mut total = 0.0;
    for ep in 0..episodes {
        let mut rng = sub_rng(seed, ep as u64);
        let start = lander.reset(&mut rng);
        let summary = rollout(&lander, start, &mut controller, &mut rng, |_, _, _, _, _| {})?;
        total += summary.total_return;
    }
    Ok(total / episodes as f64)
}

/// Deterministic `tanh(μ(s))` rollouts.
pub fn evaluate_policy(env: &EnvConfig, policy: &PolicyParams, episodes: usize, seed: u64) -> Result<f64> {
    let mut failure = None;
    let ret = evaluate_controller(env, episodes, seed, |s, _| {
        match policy.mean_action(&Matrix::row_vector(&s.to_array())) {
            Ok(a) => LanderAction::from_slice(a.row(0)),
            Err(e) => {
                failure.get_or_insert(e);
                LanderAction::new(0.0, 0.0)
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(ret),
    }
}

/// Reference scores `(random, expert)` from the uniform-random controller and
/// the noiseless scripted expert on the same start states.
pub fn reference_scores(env: &EnvConfig, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let random = evaluate_controller(env, episodes, seed, |_, r| random_policy(r))?;
    let expert = evaluate_controller(env, episodes, seed, |s, r| behavior_policy(s, PdGains::default(), 0.0, env, r))?;
    Ok((random, expert))
}

/// `100·(raw − random)/(expert − random)`.
pub fn normalized_return(raw: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) || !expert_ref.is_finite() || !random_ref.is_finite() {
        return Err(Error::contract(format!(
            "degenerate references: random {random_ref}, expert {expert_ref}"
        )));
    }
    Ok(100.0 * (raw - random_ref) / (expert_ref - random_ref))
}

/// Epoch-by-epoch training driver. Holds the last sampled batch so callers
/// can dump it when a step fails.
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    agent: Agent,
    epoch: usize,
    step: u64,
    last_batch: Option<Batch>,
    metrics: Vec<MetricsRow>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if dataset.is_empty() {
            return Err(Error::contract("cannot train on an empty dataset"));
        }
        if let Some(i) = dataset.transitions.iter().position(|t| !t.is_finite()) {
            return Err(Error::numeric(format!("dataset transition {i} is not finite")));
        }
        let agent = Agent::new(cfg, &mut sub_rng(cfg.seed, INIT_STREAM))?;
        Ok(Self::with_agent(dataset, agent))
    }

    pub fn with_agent(dataset: &'a Dataset, agent: Agent) -> Self {
        Self {
            dataset,
            agent,
            epoch: 0,
            step: 0,
            last_batch: None,
            metrics: Vec::new(),
        }
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    pub fn last_batch(&self) -> Option<&Batch> {
        self.last_batch.as_ref()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One training step: sample, critic update, actor update, target update.
    pub fn step(&mut self) -> Result<(crate::trainer::CriticStats, crate::trainer::ActorStats)> {
        let cfg = &self.agent.config;
        let mut rng = rng_from_seed(derive_seed(derive_seed(cfg.seed, STEP_STREAM), self.step));
        self.step += 1;
        let batch = Batch::sample(self.dataset, cfg.batch_size, &mut rng)?;
        self.last_batch = Some(batch.clone());
        let c = self.agent.critic_update(&batch, &mut rng)?;
        let a = self.agent.actor_update(&batch, &mut rng)?;
        self.agent.update_targets()?;
        if !self.agent.is_finite() {
            return Err(Error::numeric(format!("parameters became non-finite at step {}", self.step - 1)));
        }
        Ok((c, a))
    }

    pub fn run_epoch(&mut self) -> Result<MetricsRow> {
        let steps = self.agent.config.steps_per_epoch;
        let mut sums = [0.0; 6];
        for _ in 0..steps {
            let (c, a) = self.step()?;
            for (s, v) in sums
                .iter_mut()
                .zip([c.q_target_mean, c.weight_mean, c.loss, a.loss, a.mmd_mean, c.var_mean])
            {
                *s += v;
            }
        }
        let k = steps as f64;
        let cfg = &self.agent.config;
        let eval_return = evaluate_policy(
            &self.dataset.meta.env,
            &self.agent.policy,
            cfg.eval_episodes.max(1),
            derive_seed(cfg.seed, EVAL_STREAM),
        )?;
        let row = MetricsRow {
            epoch: self.epoch,
            eval_return,
            q_target_mean: sums[0] / k,
            weight_mean: sums[1] / k,
            critic_loss: sums[2] / k,
            actor_loss: sums[3] / k,
            mmd_mean: sums[4] / k,
            target_var_mean: sums[5] / k,
        };
        if !row.is_finite() {
            return Err(Error::numeric(format!("non-finite metrics at epoch {}: {row:?}", self.epoch)));
        }
        self.epoch += 1;
        self.metrics.push(row.clone());
        Ok(row)
    }
}

pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
}

/// Runs `cfg.epochs` epochs, calling `on_epoch` after each one.
pub fn train_with<F>(dataset: &Dataset, cfg: &TrainConfig, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRow) -> Result<()>,
{
    let mut t = Trainer::new(dataset, cfg)?;
    for _ in 0..cfg.epochs {
        let row = t.run_epoch()?;
        on_epoch(&row)?;
    }
    let metrics = t.metrics.clone();
    Ok(TrainOutcome {
        agent: t.into_agent(),
        metrics,
    })
}

pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, cfg, |_| Ok(()))
}

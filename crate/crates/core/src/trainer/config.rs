use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmd::{Estimator, Kernel, MmdConfig};
use crate::nets::Activation;
use crate::uncertainty::{WeightConfig, Weighting};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Dropout-uncertainty weighted critic and actor losses.
    Uwac,
    /// Same computation with every weight fixed to 1.
    BearBaseline,
    /// Uncertainty from the spread of `ensemble_size` deterministic critics.
    UwacEnsemble,
}

impl Mode {
    pub fn weighted(self) -> bool {
        !matches!(self, Mode::BearBaseline)
    }
}

/// Which critic value the actor maximizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorQ {
    Q1,
    Min,
    Mix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub beta: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub tau: f64,
    /// Stochastic forward passes per uncertainty estimate.
    pub passes: usize,
    /// Candidate target-policy actions per next state.
    pub p: usize,
    /// Dataset actions per state in the MMD penalty.
    pub n: usize,
    /// Policy actions per state in the MMD penalty.
    pub m: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub dropout: f64,
    /// Sample dropout masks in the online critics' regression forward pass
    /// too, not only when estimating uncertainty.
    pub train_dropout: bool,
    pub spectral_norm: bool,
    pub spectral_iterations: usize,
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub weighting: Weighting,
    pub noise_var: f64,
    pub mmd: MmdConfig,
    pub actor_q: ActorQ,
    pub ensemble_size: usize,
    pub critic_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Uwac,
            beta: 0.8,
            alpha: 10.0,
            lambda: 0.75,
            tau: 0.005,
            passes: 100,
            p: 10,
            n: 10,
            m: 10,
            batch_size: 256,
            gamma: 0.99,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            dropout: 0.1,
            train_dropout: false,
            spectral_norm: false,
            spectral_iterations: 1,
            clip_lo: 0.0,
            clip_hi: 1.5,
            weighting: Weighting::InverseVariance,
            noise_var: 0.0,
            mmd: MmdConfig {
                kernel: Kernel::Laplacian,
                sigma: 10.0,
                estimator: Estimator::V,
            },
            actor_q: ActorQ::Mix,
            ensemble_size: 5,
            critic_hidden: vec![256, 256],
            actor_hidden: vec![256, 256],
            activation: Activation::Relu,
            epochs: 100,
            steps_per_epoch: 1000,
            eval_episodes: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small single-core preset used by the examples and the acceptance suite.
    pub fn desk() -> Self {
        Self {
            passes: 10,
            p: 5,
            n: 5,
            m: 5,
            batch_size: 64,
            critic_hidden: vec![64, 64],
            actor_hidden: vec![64, 64],
            epochs: 30,
            steps_per_epoch: 100,
            eval_episodes: 5,
            ..Self::default()
        }
    }

    pub fn weight_config(&self) -> WeightConfig {
        WeightConfig {
            beta: self.beta,
            clip_lo: self.clip_lo,
            clip_hi: self.clip_hi,
            weighting: self.weighting,
        }
    }

    pub fn num_critics(&self) -> usize {
        match self.mode {
            Mode::UwacEnsemble => self.ensemble_size,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.weight_config().validate()?;
        self.mmd.validate()?;
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        for (name, lr) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(format!("{name} must be positive, got {lr}"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(self.noise_var >= 0.0) {
            return bad(format!("noise_var must be >= 0, got {}", self.noise_var));
        }
        if self.mode != Mode::UwacEnsemble && self.passes < 2 {
            return bad(format!("passes must be >= 2, got {}", self.passes));
        }
        if self.mode == Mode::UwacEnsemble && self.ensemble_size < 2 {
            return bad(format!("ensemble_size must be >= 2, got {}", self.ensemble_size));
        }
        for (name, v) in [
            ("p", self.p),
            ("n", self.n),
            ("m", self.m),
            ("batch_size", self.batch_size),
            ("steps_per_epoch", self.steps_per_epoch),
            ("spectral_iterations", self.spectral_iterations),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.critic_hidden.is_empty() || self.actor_hidden.is_empty() {
            return bad("hidden layer lists must be non-empty".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Overlays the keys of a JSON object onto `self`; nested objects merge
    /// key by key.
    pub fn with_json(&self, text: &str) -> Result<Self> {
        let patch: serde_json::Value = serde_json::from_str(text)?;
        if !patch.is_object() {
            return Err(Error::Config("config JSON must be an object".into()));
        }
        let mut base = serde_json::to_value(self)?;
        merge(&mut base, patch);
        let cfg: Self = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for cfg in [TrainConfig::default(), TrainConfig::desk()] {
            cfg.validate().unwrap();
            assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = TrainConfig::from_json(r#"{"mode": "bear-baseline", "beta": 1.6}"#).unwrap();
        assert_eq!(cfg.mode, Mode::BearBaseline);
        assert_eq!(cfg.beta, 1.6);
        assert_eq!(cfg.passes, 100);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(TrainConfig::from_json(r#"{"lambda": 1.5}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"clip_lo": 2.0}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"no_such_field": 1}"#).is_err());
    }
}

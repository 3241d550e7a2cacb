use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::lander::{EnvConfig, Lander, LanderAction, LanderState};
use crate::error::Result;

/// PD gains of the scripted expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 1.2, kd: 1.8 }
    }
}

/// Scripted expert: `clamp(−kp·pos − kd·v + (0, hover) + noise)`.
pub fn behavior_policy<R: Rng + ?Sized>(
    s: &LanderState,
    gains: PdGains,
    noise_std: f64,
    env: &EnvConfig,
    rng: &mut R,
) -> LanderAction {
    let mut tx = -gains.kp * s.x - gains.kd * s.vx;
    let mut ty = -gains.kp * s.y - gains.kd * s.vy + env.hover_thrust();
    if noise_std > 0.0 {
        let n = Normal::new(0.0, noise_std).expect("noise std validated by caller");
        tx += n.sample(rng);
        ty += n.sample(rng);
    }
    LanderAction::new(tx, ty)
}

/// Uniform random thrust in `[-1, 1]²`.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R) -> LanderAction {
    LanderAction::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
}

/// Summary of one finished episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub total_return: f64,
    pub steps: usize,
    pub landed: bool,
}

/// Runs one episode from `start`; `record` sees every transition.
pub fn rollout<R, P, F>(env: &Lander, start: LanderState, mut policy: P, rng: &mut R, mut record: F) -> Result<EpisodeSummary>
where
    R: Rng + ?Sized,
    P: FnMut(&LanderState, &mut R) -> LanderAction,
    F: FnMut(&LanderState, &LanderAction, f64, &LanderState, bool),
{
    let mut s = start;
    let mut total = 0.0;
    for step in 0..env.config.max_steps {
        let a = policy(&s, rng);
        let out = env.step(&s, &a, rng)?;
        record(&s, &a, out.reward, &out.next, out.done);
        total += out.reward;
        if out.done {
            return Ok(EpisodeSummary {
                total_return: total,
                steps: step + 1,
                landed: out.landed,
            });
        }
        s = out.next;
    }
    Ok(EpisodeSummary {
        total_return: total,
        steps: env.config.max_steps,
        landed: false,
    })
}

//! Deterministic 2-D point lander. The goal sits at the origin; `y` is the
//! height above the ground.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

pub const X_BOUND: f64 = 2.0;
pub const Y_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanderState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl LanderState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn to_array(self) -> [f64; STATE_DIM] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn distance(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    /// Outside the flight box: `|x| > 2`, `y < 0` or `y > 2`.
    pub fn out_of_bounds(&self) -> bool {
        self.x.abs() > X_BOUND || self.y < 0.0 || self.y > Y_MAX
    }
}

/// Thrust command, each component clamped to `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanderAction {
    pub thrust: [f64; ACTION_DIM],
}

impl LanderAction {
    pub fn new(tx: f64, ty: f64) -> Self {
        Self {
            thrust: [tx.clamp(-1.0, 1.0), ty.clamp(-1.0, 1.0)],
        }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn norm_sq(&self) -> f64 {
        self.thrust[0] * self.thrust[0] + self.thrust[1] * self.thrust[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub dt: f64,
    pub gravity: f64,
    pub thrust_scale: f64,
    pub fuel_cost: f64,
    pub landing_radius: f64,
    pub landing_speed: f64,
    pub max_steps: usize,
    pub noise_std: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gravity: 0.5,
            thrust_scale: 1.5,
            fuel_cost: 0.02,
            landing_radius: 0.1,
            landing_speed: 0.3,
            max_steps: 200,
            noise_std: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("gravity", self.gravity),
            ("thrust_scale", self.thrust_scale),
            ("fuel_cost", self.fuel_cost),
            ("landing_radius", self.landing_radius),
            ("landing_speed", self.landing_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("env {name} must be positive, got {v}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("env max_steps must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("env noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }

    /// Thrust that exactly cancels gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.gravity / self.thrust_scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: LanderState,
    pub reward: f64,
    pub done: bool,
    pub landed: bool,
    pub crashed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Lander {
    pub config: EnvConfig,
}

impl Lander {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    /// Initial state: `x ~ U[-1,1]`, `y ~ U[0.8,1.5]`, velocities `~ N(0, 0.05)`.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> LanderState {
        let vel = Normal::new(0.0, 0.05).expect("valid normal");
        let x = rng.random_range(-1.0..=1.0);
        let y = rng.random_range(0.8..=1.5);
        let vx = vel.sample(rng);
        let vy = vel.sample(rng);
        LanderState::new(x, y, vx, vy)
    }

    /// Semi-implicit Euler step. Landing (checked first) ends the episode
    /// with +100; leaving the flight box ends it with −10.
    pub fn step<R: Rng + ?Sized>(&self, s: &LanderState, a: &LanderAction, rng: &mut R) -> Result<StepOutcome> {
        if s.out_of_bounds() {
            return Err(Error::contract(format!("step from terminal state {s:?}")));
        }
        let c = &self.config;
        let a = LanderAction::new(a.thrust[0], a.thrust[1]);
        let mut ax = c.thrust_scale * a.thrust[0];
        let mut ay = c.thrust_scale * a.thrust[1] - c.gravity;
        if c.noise_std > 0.0 {
            let n = Normal::new(0.0, c.noise_std).expect("validated noise");
            ax += n.sample(rng);
            ay += n.sample(rng);
        }
        let vx = s.vx + ax * c.dt;
        let vy = s.vy + ay * c.dt;
        let next = LanderState::new(s.x + vx * c.dt, s.y + vy * c.dt, vx, vy);

        let landed = next.distance() < c.landing_radius && next.speed() < c.landing_speed;
        let crashed = !landed && next.out_of_bounds();
        let mut reward = -next.distance() - c.fuel_cost * a.norm_sq();
        if landed {
            reward += 100.0;
        }
        if crashed {
            reward -= 10.0;
        }
        Ok(StepOutcome {
            next,
            reward,
            done: landed || crashed,
            landed,
            crashed,
        })
    }
}

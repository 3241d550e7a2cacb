//! Point-lander environment, scripted behavior policies and offline datasets.

pub mod behavior;
pub mod dataset;
pub mod lander;

pub use behavior::{behavior_policy, random_policy, rollout, EpisodeSummary, PdGains};
pub use dataset::{clip_dataset, generate_dataset, Axis, Behavior, ClipSpec, Dataset, DatasetMeta, Keep, Transition};
pub use lander::{EnvConfig, Lander, LanderAction, LanderState, StepOutcome, ACTION_DIM, STATE_DIM};

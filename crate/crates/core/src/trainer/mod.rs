//! Uncertainty-weighted actor-critic training with a fixed-weight MMD
//! support penalty, plus the unweighted baseline and an ensemble variant.

pub mod agent;
pub mod config;
pub mod gradcheck;
pub mod metrics;
pub mod store;
pub mod train;

pub use agent::{actor_forward, actor_loss, critic_loss, ActorForward, ActorStats, Agent, Batch, CriticStats};
pub use config::{ActorQ, Mode, TrainConfig};
pub use gradcheck::{gradcheck_suite, GradcheckReport};
pub use metrics::{read_metrics, write_metrics, metrics_to_csv, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use train::{evaluate_controller, evaluate_policy, normalized_return, reference_scores, train, train_with, TrainOutcome, Trainer};
pub use store::{load_agent, save_agent};

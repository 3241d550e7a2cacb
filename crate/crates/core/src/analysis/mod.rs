//! Post-hoc analysis: uncertainty heatmaps, OOD ROC/AUC, Q-explosion
//! detection and a Monte-Carlo check of the weighted Chebyshev bound.

pub mod bound;
pub mod explosion;
pub mod heatmap;
pub mod roc;

pub use bound::{chebyshev_bound_check, BoundCheckReport, BoundedDist};
pub use explosion::{detect_q_explosion, max_abs_q, DEFAULT_RATIO};
pub use heatmap::{grid_heatmap, uncertainty_heatmap, uniform_edges, ActionSource, HeatCell, HeatmapGrid, UncertaintySource};
pub use roc::{ood_auc, roc_auc, OodAucReport};

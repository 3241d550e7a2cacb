//! Dense numerical kernel: matrices, reverse-mode differentiation, Adam and
//! spectral normalization.

pub mod gradcheck;
pub mod graph;
pub mod matrix;
pub mod optim;
pub mod spectral;

pub use gradcheck::grad_check;
pub use graph::{Graph, OpKind, Var};
pub use matrix::Matrix;
pub use optim::AdamState;
pub use spectral::{spectral_normalize, SpectralState};

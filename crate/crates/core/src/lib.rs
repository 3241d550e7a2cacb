//! Uncertainty-weighted offline actor-critic on a small point-lander task.
//!
//! The pieces, bottom up: [`ndcore`] (matrices, reverse-mode autodiff, Adam,
//! spectral norm), [`nets`] (dropout MLP critics, tanh-Gaussian policy),
//! [`env`] (lander, scripted expert, datasets), [`uncertainty`] and [`mmd`]
//! (the two loss ingredients), [`trainer`] and [`analysis`].

pub mod analysis;
pub mod cli;
pub mod env;
pub mod error;
pub mod mmd;
pub mod ndcore;
pub mod nets;
pub mod rng;
pub mod trainer;
pub mod uncertainty;

pub use error::{Category, Error, Result};

//! Dropout MLP critics, the tanh-Gaussian policy and their checkpoints.

pub mod checkpoint;
pub mod mlp;
pub mod policy;

pub use mlp::{dropout_masks, soft_update, Activation, BoundMlp, DropoutMode, Layer, MlpParams, MlpSpec, SpectralParam};
pub use policy::{soft_update_policy, BoundPolicy, PolicyParams, PolicySample, PolicySpec};

/// Twin critics sharing one architecture, initialized independently.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticPair {
    pub q1: MlpParams,
    pub q2: MlpParams,
}

impl CriticPair {
    pub fn init<R: rand::Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> crate::Result<Self> {
        Ok(Self {
            q1: MlpParams::init(spec, rng)?,
            q2: MlpParams::init(spec, rng)?,
        })
    }

    pub fn members(&self) -> [&MlpParams; 2] {
        [&self.q1, &self.q2]
    }
}

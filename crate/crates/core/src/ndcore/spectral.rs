//! Spectral normalization by power iteration with a persistent left
//! singular vector.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ndcore::matrix::Matrix;

/// Persistent power-iteration state for one weight matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    u: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SpectralState {
    /// Random unit vector of length `rows`.
    pub fn new<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&u);
        if n > 0.0 {
            u.iter_mut().for_each(|x| *x /= n);
        } else if let Some(first) = u.first_mut() {
            *first = 1.0;
        }
        Self { u }
    }

    pub fn from_vector(u: Vec<f64>) -> Result<Self> {
        let n = norm(&u);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::contract("spectral state vector must be non-zero and finite"));
        }
        Ok(Self {
            u: u.into_iter().map(|x| x / n).collect(),
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Runs `iterations` power steps and returns the estimate σ̂ = ‖W v‖.
    /// A zero matrix yields σ̂ = 1 and leaves `u` untouched.
    pub fn estimate(&mut self, w: &Matrix, iterations: usize) -> Result<f64> {
        if iterations == 0 {
            return Err(Error::contract("spectral normalization needs at least one iteration"));
        }
        if self.u.len() != w.rows() {
            return Err(Error::Dimension {
                op: "spectral_normalize",
                left: w.shape(),
                right: (self.u.len(), 1),
            });
        }
        if w.max_abs() == 0.0 {
            return Ok(1.0);
        }
        let mut sigma = 0.0;
        for _ in 0..iterations {
            let mut v = w.t_mul_vec(&self.u)?;
            let mut nv = norm(&v);
            if nv == 0.0 {
                // u fell into the left null space; restart from the heaviest row.
                let best = (0..w.rows())
                    .max_by(|&a, &b| norm(w.row(a)).total_cmp(&norm(w.row(b))))
                    .unwrap_or(0);
                self.u.iter_mut().for_each(|x| *x = 0.0);
                self.u[best] = 1.0;
                v = w.t_mul_vec(&self.u)?;
                nv = norm(&v);
            }
            v.iter_mut().for_each(|x| *x /= nv);
            let mut u = w.mul_vec(&v)?;
            sigma = norm(&u);
            u.iter_mut().for_each(|x| *x /= sigma);
            self.u = u;
        }
        Ok(sigma)
    }
}

/// Returns `W / σ̂(W)` and the estimate σ̂; `state` keeps its updated `u`.
pub fn spectral_normalize(w: &Matrix, state: &mut SpectralState, iterations: usize) -> Result<(Matrix, f64)> {
    let sigma = state.estimate(w, iterations)?;
    Ok((w.scaled(1.0 / sigma), sigma))
}

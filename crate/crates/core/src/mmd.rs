//! Sampled maximum mean discrepancy between action sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Graph, Matrix, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Gaussian,
    Laplacian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Diagonal included; never negative.
    V,
    /// Diagonal excluded; unbiased, may be negative. Needs m, n ≥ 2.
    U,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdConfig {
    pub kernel: Kernel,
    pub sigma: f64,
    #[serde(default = "default_estimator")]
    pub estimator: Estimator,
}

fn default_estimator() -> Estimator {
    Estimator::V
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Laplacian,
            sigma: 10.0,
            estimator: Estimator::V,
        }
    }
}

impl MmdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("mmd sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Gaussian `exp(−‖x−y‖²/(2σ))`, Laplacian `exp(−‖x−y‖₁/σ)`.
pub fn kernel_eval(x: &[f64], y: &[f64], cfg: &MmdConfig) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            op: "kernel_eval",
            left: (1, x.len()),
            right: (1, y.len()),
        });
    }
    let d = match cfg.kernel {
        Kernel::Gaussian => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * cfg.sigma),
        Kernel::Laplacian => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>() / cfg.sigma,
    };
    Ok((-d).exp())
}

fn check_sets(m: usize, n: usize, cfg: &MmdConfig) -> Result<()> {
    cfg.validate()?;
    let min = match cfg.estimator {
        Estimator::V => 1,
        Estimator::U => 2,
    };
    if m < min || n < min {
        return Err(Error::contract(format!(
            "mmd needs at least {min} points per set, got m={m}, n={n}"
        )));
    }
    Ok(())
}

fn block_mean(a: &Matrix, b: &Matrix, cfg: &MmdConfig, skip_diag: bool) -> Result<f64> {
    let mut s = 0.0;
    let mut count = 0usize;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            if skip_diag && i == j {
                continue;
            }
            s += kernel_eval(a.row(i), b.row(j), cfg)?;
            count += 1;
        }
    }
    Ok(s * (1.0 / count as f64))
}

/// Plain-value MMD² between the rows of `x` (m points) and `y` (n points).
pub fn mmd_squared_value(x: &Matrix, y: &Matrix, cfg: &MmdConfig) -> Result<f64> {
    check_sets(x.rows(), y.rows(), cfg)?;
    if x.cols() != y.cols() {
        return Err(Error::Dimension {
            op: "mmd_squared",
            left: x.shape(),
            right: y.shape(),
        });
    }
    let u = cfg.estimator == Estimator::U;
    let v = block_mean(x, x, cfg, u)? + block_mean(y, y, cfg, u)? - 2.0 * block_mean(x, y, cfg, false)?;
    Ok(if u { v } else { v.max(0.0) })
}

/// Per-state MMD² on the graph. `x` holds `m` policy actions per state and
/// `y` holds `n` dataset actions per state, both state-major; the result is
/// `B × 1` and differentiable with respect to `x`. V-statistic values are
/// clamped at zero.
pub fn mmd_squared_batch(g: &mut Graph, x: Var, m: usize, y: &Matrix, n: usize, cfg: &MmdConfig) -> Result<Var> {
    check_sets(m, n, cfg)?;
    let (xr, xc) = g.value(x).shape();
    if xr % m != 0 || y.rows() % n != 0 || xr / m != y.rows() / n || xc != y.cols() {
        return Err(Error::Dimension {
            op: "mmd_squared",
            left: (xr, xc),
            right: y.shape(),
        });
    }
    let b = xr / m;
    let u = cfg.estimator == Estimator::U;

    let mut xi = Vec::new();
    let mut xj = Vec::new();
    for s in 0..b {
        for i in 0..m {
            for j in 0..m {
                if !(u && i == j) {
                    xi.push(s * m + i);
                    xj.push(s * m + j);
                }
            }
        }
    }
    let xx_pairs = xi.len() / b;
    let left = g.gather_rows(x, xi)?;
    let right = g.gather_rows(x, xj)?;
    let diff = g.sub(left, right)?;
    let kxx = kernel_rows(g, diff, cfg);
    let kxx = g.group_sum(kxx, xx_pairs)?;
    let kxx = g.scale(kxx, 1.0 / xx_pairs as f64);

    let mut xa = Vec::with_capacity(b * m * n);
    let mut yrows = Vec::with_capacity(b * m * n);
    for s in 0..b {
        for i in 0..m {
            for j in 0..n {
                xa.push(s * m + i);
                yrows.push(s * n + j);
            }
        }
    }
    let left = g.gather_rows(x, xa)?;
    let right = g.constant(y.gather_rows(&yrows)?);
    let diff = g.sub(left, right)?;
    let kxy = kernel_rows(g, diff, cfg);
    let kxy = g.group_sum(kxy, m * n)?;
    let kxy = g.scale(kxy, 1.0 / (m * n) as f64);
    let kxy = g.scale(kxy, -2.0);

    let mut kyy = Matrix::zeros(b, 1);
    for s in 0..b {
        let ys = y.gather_rows(&(s * n..(s + 1) * n).collect::<Vec<_>>())?;
        kyy.set(s, 0, block_mean(&ys, &ys, cfg, u)?);
    }
    let kyy = g.constant(kyy);

    let partial = g.add(kxx, kxy)?;
    let total = g.add(partial, kyy)?;
    Ok(if u { total } else { g.relu(total) })
}

/// Single-set MMD² between `x` (m × d, on the graph) and constant `y`.
pub fn mmd_squared(g: &mut Graph, x: Var, y: &Matrix, cfg: &MmdConfig) -> Result<Var> {
    let m = g.value(x).rows();
    let out = mmd_squared_batch(g, x, m, y, y.rows(), cfg)?;
    Ok(out)
}

fn kernel_rows(g: &mut Graph, diff: Var, cfg: &MmdConfig) -> Var {
    let dist = match cfg.kernel {
        Kernel::Gaussian => {
            let sq = g.square(diff);
            let d = g.row_sum(sq);
            g.scale(d, -1.0 / (2.0 * cfg.sigma))
        }
        Kernel::Laplacian => {
            let ab = g.abs(diff);
            let d = g.row_sum(ab);
            g.scale(d, -1.0 / cfg.sigma)
        }
    };
    g.exp(dist)
}

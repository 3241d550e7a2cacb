use crate::error::{Error, Result};
use crate::ndcore::graph::{Graph, Var};
use crate::ndcore::matrix::Matrix;

pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar graph against central
/// differences and returns the largest relative discrepancy
/// `|a − n| / max(|a| + |n|, GRAD_FLOOR)` over every parameter entry.
///
/// The floor keeps entries whose true gradient is near zero from being
/// judged on central-difference roundoff alone.
///
/// `build` receives a fresh graph and one trainable leaf per entry of
/// `params` and must return a scalar node.
pub fn grad_check<F>(build: F, params: &[Matrix], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::contract(format!("grad_check step must be positive, got {h}")));
    }
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let root = build(&mut g, &vars)?;
        let v = g.scalar(root)?;
        if !v.is_finite() {
            return Err(Error::numeric(format!("grad_check: function evaluated to {v}")));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = build(&mut g, &vars)?;
    if !g.scalar(root)?.is_finite() {
        return Err(Error::numeric("grad_check: non-finite function value"));
    }
    g.backward(root)?;
    let analytic: Vec<Matrix> = vars.iter().map(|&v| g.grad(v)).collect();

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            work[pi].data_mut()[j] = orig + h;
            let fp = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let fm = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let a = grad.data()[j];
            let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

//! Reverse-mode gradients of a small tanh network, checked against central
//! differences.

use uwac::ndcore::{grad_check, Graph, Matrix};
use uwac::Result;

fn net(g: &mut Graph, p: &[uwac::ndcore::Var], x: &Matrix) -> Result<uwac::ndcore::Var> {
    let x = g.constant(x.clone());
    let h = g.affine(x, p[0], p[1])?;
    let h = g.tanh(h);
    let y = g.affine(h, p[2], p[3])?;
    let y = g.square(y);
    g.mean(y)
}

fn main() -> Result<()> {
    let x = Matrix::from_vec(3, 2, vec![0.5, -1.0, 0.2, 0.3, -0.7, 0.9])?;
    let params = vec![
        Matrix::from_vec(4, 2, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.6, 0.2, -0.3])?,
        Matrix::row_vector(&[0.1, 0.0, -0.1, 0.05]),
        Matrix::from_vec(1, 4, vec![0.7, -0.5, 0.3, 0.2])?,
        Matrix::row_vector(&[0.2]),
    ];

    let mut g = Graph::new();
    let vars: Vec<_> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = net(&mut g, &vars, &x)?;
    g.backward(loss)?;
    println!("loss = {:.6}", g.scalar(loss)?);
    for (i, v) in vars.iter().enumerate() {
        println!("d loss / d p{i} = {:?}", g.grad(*v).data());
    }

    let err = grad_check(|g, p| net(g, p, &x), &params, 1e-5)?;
    println!("max relative error vs finite differences: {err:.2e}");
    Ok(())
}

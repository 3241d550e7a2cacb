//! Squared MMD between a fixed sample and shifted copies.

use rand::Rng;
use uwac::mmd::{mmd_squared_value, Estimator, Kernel, MmdConfig};
use uwac::ndcore::Matrix;
use uwac::rng::rng_from_seed;

fn main() -> uwac::Result<()> {
    let mut rng = rng_from_seed(5);
    let n = 64;
    let base: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = Matrix::from_vec(n, 2, base.clone())?;

    for kernel in [Kernel::Laplacian, Kernel::Gaussian] {
        let cfg = MmdConfig { kernel, sigma: 20.0, estimator: Estimator::V };
        print!("{kernel:?}:");
        for shift in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let y = Matrix::from_vec(n, 2, base.iter().map(|v| v + shift).collect())?;
            print!("  shift {shift}: {:.5}", mmd_squared_value(&x, &y, &cfg)?);
        }
        println!();
    }
    Ok(())
}

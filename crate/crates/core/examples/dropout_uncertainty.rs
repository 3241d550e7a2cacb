//! MC-dropout variance of a twin critic and the loss weight it implies.

use uwac::ndcore::Matrix;
use uwac::nets::{Activation, CriticPair, MlpSpec};
use uwac::rng::rng_from_seed;
use uwac::uncertainty::{mixed_q_passes, row_estimates, weight, WeightConfig, Weighting};

fn main() -> uwac::Result<()> {
    let spec = MlpSpec::new(vec![6, 64, 64, 1], Activation::Relu, 0.1)?;
    let critics = CriticPair::init(&spec, &mut rng_from_seed(0))?;

    // state (x, y, vx, vy) followed by a 2-d thrust
    let inputs = Matrix::from_rows(&[
        &[0.2, 0.5, 0.0, -0.2, 0.0, 0.4],
        &[1.5, 1.8, 0.9, 0.7, -1.0, 1.0],
        &[-3.0, 4.0, 2.0, -2.0, 1.0, -1.0],
    ])?;
    let samples = mixed_q_passes(&critics.q1, &critics.q2, &inputs, 0.75, 100, 42)?;
    let cfg = WeightConfig { beta: 0.8, clip_lo: 0.0, clip_hi: 1.5, weighting: Weighting::InverseVariance };
    for (i, u) in row_estimates(&samples, 0.0)?.iter().enumerate() {
        println!("input {i}: mean {:+.4}  variance {:.3e}  weight {:.3}", u.mean, u.variance, weight(u, &cfg));
    }
    Ok(())
}

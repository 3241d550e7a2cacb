//! Tanh-Gaussian policy: samples stay inside (-1, 1) and carry exact log-densities.

use uwac::nets::{Activation, PolicyParams, PolicySpec};
use uwac::rng::rng_from_seed;

fn main() -> uwac::Result<()> {
    let spec = PolicySpec { state_dim: 4, hidden: vec![32, 32], action_dim: 2, activation: Activation::Relu };
    let policy = PolicyParams::init(&spec, &mut rng_from_seed(1))?;
    let state = [0.4, 1.2, -0.1, -0.3];
    let mut rng = rng_from_seed(2);
    for _ in 0..5 {
        let (a, logp) = policy.sample_action(&state, &mut rng)?;
        println!("action [{:+.4}, {:+.4}]  log pi {logp:+.4}  recomputed {:+.4}", a[0], a[1], policy.log_density(&state, &a)?);
    }
    let mean = policy.mean_action(&uwac::ndcore::Matrix::row_vector(&state))?;
    println!("deterministic action {:?}", mean.data());
    Ok(())
}

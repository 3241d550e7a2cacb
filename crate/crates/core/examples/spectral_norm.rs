//! Power iteration with a persistent vector, one step per call, as used on
//! the critic weights.

use rand::Rng;
use uwac::ndcore::{spectral_normalize, Matrix, SpectralState};
use uwac::rng::rng_from_seed;

fn main() -> uwac::Result<()> {
    let mut rng = rng_from_seed(3);
    let data: Vec<f64> = (0..32 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Matrix::from_vec(32, 16, data)?;
    let mut state = SpectralState::new(w.rows(), &mut rng);

    for step in 1..=10 {
        let (normalized, sigma) = spectral_normalize(&w, &mut state, 1)?;
        println!("step {step:>2}: sigma estimate {sigma:.5}, normalized Frobenius norm {:.4}", normalized.frobenius_norm());
    }
    let mut fresh = state.clone();
    println!("after 200 more iterations: {:.6}", fresh.estimate(&w, 200)?);
    Ok(())
}

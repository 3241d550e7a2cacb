//! A short UWAC run on expert data with the desk preset.
//!
//! `cargo run --release --example train_uwac -- [epochs] [seed]`

use uwac::env::{generate_dataset, Behavior, EnvConfig};
use uwac::trainer::{normalized_return, reference_scores, train_with, Mode, TrainConfig};

fn main() -> uwac::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let env = EnvConfig::default();
    let data = generate_dataset(&env, &Behavior::expert(), 100, 1)?;
    let (random_ref, expert_ref) = reference_scores(&env, 20, 5)?;
    let cfg = TrainConfig { mode: Mode::Uwac, epochs, seed, ..TrainConfig::desk() };

    println!("{} transitions; references random {random_ref:.1}, expert {expert_ref:.1}", data.len());
    train_with(&data, &cfg, |row| {
        let norm = normalized_return(row.eval_return, random_ref, expert_ref)?;
        println!(
            "epoch {:>3}  return {:>8.2} ({norm:>5.1})  q_target {:>8.2}  weight {:.3}  mmd {:.4}",
            row.epoch, row.eval_return, row.q_target_mean, row.weight_mean, row.mmd_mean
        );
        Ok(())
    })?;
    Ok(())
}

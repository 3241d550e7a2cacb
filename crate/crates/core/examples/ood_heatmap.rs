//! Train on a dataset with the left half removed, then score uncertainty over
//! the full state space and against random actions. Writes the heatmap SVG
//! to `ood_heatmap.svg` in the working directory.

use uwac::analysis::{ood_auc, uncertainty_heatmap, uniform_edges, ActionSource, UncertaintySource};
use uwac::env::lander::{X_BOUND, Y_MAX};
use uwac::env::{clip_dataset, generate_dataset, Axis, Behavior, ClipSpec, EnvConfig, Keep};
use uwac::nets::Activation;
use uwac::trainer::{train, TrainConfig};

fn main() -> uwac::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let full = generate_dataset(&EnvConfig::default(), &Behavior::expert(), 200, 1)?;
    let right = clip_dataset(&full, ClipSpec::new(Axis::X, 0.1, Keep::Above))?;
    let cfg = TrainConfig {
        epochs,
        train_dropout: true,
        activation: Activation::Tanh,
        ..TrainConfig::desk()
    };
    let agent = train(&right, &cfg)?.agent;

    let unc = UncertaintySource::Dropout { q1: &agent.critics[0], q2: &agent.critics[1], lambda: cfg.lambda, passes: 50, seed: 9 };
    let xs = uniform_edges(-X_BOUND, X_BOUND, 20)?;
    let ys = uniform_edges(0.0, Y_MAX, 20)?;
    let grid = uncertainty_heatmap(&unc, &full, ActionSource::Dataset, &xs, &ys)?;
    let left = grid.region_mean(|_, hi, _, _| hi <= 0.1).unwrap_or(f64::NAN);
    let kept = grid.region_mean(|lo, _, _, _| lo >= 0.1).unwrap_or(f64::NAN);
    println!("mean variance: removed side {left:.4}, kept side {kept:.4}, ratio {:.2}", left / kept);

    let report = ood_auc(&unc, &right, 10, 2000, 3)?;
    println!("dataset actions vs random actions: AUC {:.3}", report.auc);

    std::fs::write("ood_heatmap.svg", grid.to_svg("critic variance, left half removed"))?;
    Ok(())
}

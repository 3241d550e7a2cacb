//! Baseline vs UWAC on a narrow dataset: watch the target Q estimates.
//! Pass the number of epochs (default 20).

use uwac::analysis::{detect_q_explosion, max_abs_q, DEFAULT_RATIO};
use uwac::env::{clip_dataset, generate_dataset, Axis, Behavior, ClipSpec, EnvConfig, Keep, PdGains};
use uwac::trainer::{train, Mode, TrainConfig};

fn main() -> uwac::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let behavior = Behavior::Expert { gains: PdGains::default(), noise_std: 0.01 };
    let raw = generate_dataset(&EnvConfig::default(), &behavior, 200, 1)?;
    let narrow = clip_dataset(&raw, ClipSpec::new(Axis::Y, 0.8, Keep::Below))?;

    let runs = [
        ("bear-baseline", TrainConfig { mode: Mode::BearBaseline, epochs, ..TrainConfig::desk() }),
        ("uwac + spectral norm", TrainConfig { mode: Mode::Uwac, spectral_norm: true, epochs, ..TrainConfig::desk() }),
    ];
    for (name, cfg) in runs {
        let rows = train(&narrow, &cfg)?.metrics;
        let last = rows.last().expect("epochs > 0");
        println!(
            "{name:<22} final return {:>7.2}  max |q_target| {:>12.2}  exploded at {:?}",
            last.eval_return,
            max_abs_q(&rows),
            detect_q_explosion(&rows, DEFAULT_RATIO)
        );
    }
    Ok(())
}

//! Expert rollouts on the lander, a displacement clip and a save/load round trip.

use uwac::env::{clip_dataset, generate_dataset, Axis, Behavior, ClipSpec, Dataset, EnvConfig, Keep};

fn main() -> uwac::Result<()> {
    let env = EnvConfig::default();
    let full = generate_dataset(&env, &Behavior::expert(), 50, 7)?;
    let clipped = clip_dataset(&full, ClipSpec::new(Axis::X, 0.1, Keep::Above))?;
    println!("expert: {} transitions from {} episodes", full.len(), full.meta.episodes);
    println!("kept x >= 0.1: {} transitions ({})", clipped.len(), clipped.meta.clip_description());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("clipped.uwds");
    clipped.save(&path)?;
    let back = Dataset::load(&path)?;
    println!("{} bytes on disk, round trip equal: {}", std::fs::metadata(&path)?.len(), back == clipped);

    let landed = full.transitions.iter().filter(|t| t.done && t.r > 50.0).count();
    println!("terminal transitions with the landing bonus: {landed}");
    Ok(())
}

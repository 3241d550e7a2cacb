use std::path::PathBuf;

use proptest::prelude::*;
use uwac::env::dataset::{MAGIC, VERSION};
use uwac::env::lander::{X_BOUND, Y_MAX};
use uwac::env::{
    behavior_policy, clip_dataset, generate_dataset, rollout, Axis, Behavior, ClipSpec, Dataset, EnvConfig, Keep, Lander,
    LanderAction, LanderState, PdGains,
};
use uwac::rng::rng_from_seed;
use uwac::Category;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dataset_v1_0.uwds")
}

#[test]
fn reads_format_1_0_fixture() {
    let d = Dataset::load(fixture()).unwrap();
    assert_eq!(d.len(), 3);
    assert_eq!(d.meta.seed, 7);
    assert_eq!(d.meta.episodes, 1);
    assert!(d.meta.clips.is_empty());
    assert_eq!(d.meta.clip_description(), "none");
    assert_eq!(d.meta.behavior, Behavior::Expert { gains: PdGains { kp: 1.2, kd: 1.8 }, noise_std: 0.05 });
    let t = &d.transitions[0];
    assert_eq!(t.s, LanderState::new(0.5, 1.0, 0.0, -0.1));
    assert_eq!(t.a.thrust, [-0.25, 0.5]);
    assert_eq!(t.r, -1.125);
    assert!(!t.done);
    let last = &d.transitions[2];
    assert_eq!(last.r, 99.5);
    assert!(last.done);
}

#[test]
fn fixture_resaves_at_current_version() {
    let d = Dataset::load(fixture()).unwrap();
    let bytes = d.to_bytes().unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
    assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
}

fn with_version(v: u32) -> Vec<u8> {
    let mut b = std::fs::read(fixture()).unwrap();
    b[4..8].copy_from_slice(&v.to_le_bytes());
    b
}

#[test]
fn newer_minor_and_other_major_rejected_with_offset() {
    for v in [VERSION + 1, 2 << 16, 0] {
        let err = Dataset::from_bytes(&with_version(v)).unwrap_err();
        assert_eq!(err.category(), Category::Format);
        assert!(err.to_string().contains("at byte 4"), "{err}");
    }
}

#[test]
fn bad_magic_rejected() {
    let mut b = std::fs::read(fixture()).unwrap();
    b[0] = b'X';
    let err = Dataset::from_bytes(&b).unwrap_err();
    assert_eq!(err.category(), Category::Format);
}

#[test]
fn reset_x_mean_is_centered() {
    let env = Lander::default();
    let mut rng = rng_from_seed(21);
    let n = 10_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let s = env.reset(&mut rng);
        assert!(!s.out_of_bounds());
        sum += s.x;
    }
    assert!((sum / n as f64).abs() < 0.03);
}

fn noisy_trajectory(seed: u64) -> Vec<(LanderState, f64)> {
    let cfg = EnvConfig { noise_std: 0.2, ..EnvConfig::default() };
    let env = Lander::new(cfg.clone()).unwrap();
    let mut rng = rng_from_seed(seed);
    let start = env.reset(&mut rng);
    let mut out = Vec::new();
    rollout(
        &env,
        start,
        |s, r| behavior_policy(s, PdGains::default(), 0.1, &cfg, r),
        &mut rng,
        |_, _, rew, next, _| out.push((*next, rew)),
    )
    .unwrap();
    out
}

#[test]
fn replaying_a_seed_reproduces_the_trajectory() {
    let a = noisy_trajectory(5);
    assert!(a.len() > 1);
    assert_eq!(a, noisy_trajectory(5));
    assert_ne!(a, noisy_trajectory(6));
}

fn small_dataset() -> Dataset {
    generate_dataset(&EnvConfig::default(), &Behavior::expert(), 8, 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn reward_is_bounded(
        x in -X_BOUND..X_BOUND, y in 0.0..Y_MAX, vx in -3.0f64..3.0, vy in -3.0f64..3.0,
        tx in -5.0f64..5.0, ty in -5.0f64..5.0, seed in any::<u64>(),
    ) {
        let env = Lander::new(EnvConfig { noise_std: 0.1, ..EnvConfig::default() }).unwrap();
        let s = LanderState::new(x, y, vx, vy);
        let out = env.step(&s, &LanderAction::new(tx, ty), &mut rng_from_seed(seed)).unwrap();
        // one step moves at most (|v| + |a|·dt)·dt from a position inside the box
        let pos_max = (X_BOUND.powi(2) + Y_MAX.powi(2)).sqrt() + 0.5;
        let fuel_max = env.config.fuel_cost * 2.0;
        prop_assert!(out.reward.abs() <= 100.0 + 10.0 + pos_max + fuel_max);
        prop_assert!(out.reward.is_finite());
    }

    #[test]
    fn clipping_is_idempotent(axis_x in any::<bool>(), threshold in 0.05f64..0.9, below in any::<bool>()) {
        let d = small_dataset();
        let spec = ClipSpec::new(
            if axis_x { Axis::X } else { Axis::Y },
            threshold,
            if below { Keep::Below } else { Keep::Above },
        );
        if let Ok(once) = clip_dataset(&d, spec.clone()) {
            prop_assert!(once.transitions.iter().all(|t| spec.keeps(&t.s)));
            prop_assert_eq!(clip_dataset(&once, spec).unwrap(), once);
        }
    }
}

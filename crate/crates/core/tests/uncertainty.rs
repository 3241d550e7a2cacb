use proptest::prelude::*;
use uwac::ndcore::Matrix;
use uwac::nets::{Activation, CriticPair, MlpParams, MlpSpec};
use uwac::rng::rng_from_seed;
use uwac::uncertainty::{
    ensemble_variance, mc_target_samples, mc_target_samples_batch, mixed_q_passes, predictive_variance, weight_from_variance, WeightConfig,
    Weighting,
};

/// Welford's streaming update, used only as an oracle.
fn welford(xs: &[f64]) -> f64 {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for &x in xs {
        n += 1.0;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    m2 / n
}

fn critics(seed: u64, dropout: f64) -> CriticPair {
    let spec = MlpSpec::new(vec![6, 16, 16, 1], Activation::Relu, dropout).unwrap();
    CriticPair::init(&spec, &mut rng_from_seed(seed)).unwrap()
}

fn cfg(beta: f64, weighting: Weighting) -> WeightConfig {
    WeightConfig { beta, clip_lo: 0.0, clip_hi: 1.5, weighting }
}

#[test]
fn batch_entries_are_max_over_mixed_candidates() {
    let pair = critics(1, 0.2);
    let states = Matrix::from_vec(2, 4, vec![0.1, 0.5, 0.0, -0.1, -0.6, 1.2, 0.2, 0.0]).unwrap();
    let cands = Matrix::from_vec(6, 2, vec![0.1, 0.2, -0.3, 0.4, 0.0, 0.9, 0.5, 0.5, -0.5, 0.1, 0.2, -0.8]).unwrap();
    let batch = mc_target_samples_batch(&pair.q1, &pair.q2, &states, &cands, 3, 0.75, 12, 99).unwrap();
    let inputs = states.repeat_rows(3).hconcat(&cands).unwrap();
    let mixed = mixed_q_passes(&pair.q1, &pair.q2, &inputs, 0.75, 12, 99).unwrap();
    for b in 0..2 {
        for t in 0..12 {
            let want = (0..3).map(|i| mixed.get(b * 3 + i, t)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(batch.get(b, t), want);
        }
    }
    let single = mc_target_samples(&pair, states.row(0), &Matrix::from_vec(3, 2, cands.data()[..6].to_vec()).unwrap(), 0.75, 12, 99);
    assert_eq!(single.unwrap().len(), 12);
}

#[test]
fn zero_dropout_gives_zero_variance() {
    let pair = critics(2, 0.0);
    let cands = Matrix::from_vec(2, 2, vec![0.1, 0.2, -0.3, 0.4]).unwrap();
    let ys = mc_target_samples(&pair, &[0.0, 1.0, 0.0, 0.0], &cands, 0.75, 10, 5).unwrap();
    assert!(ys.iter().all(|&y| y == ys[0]));
    assert_eq!(predictive_variance(&ys, 0.0).unwrap().variance, 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn variance_matches_welford(xs in prop::collection::vec(-1e3f64..1e3, 2..200), noise in 0.0f64..2.0) {
        let u = predictive_variance(&xs, noise).unwrap();
        let want = welford(&xs) + noise;
        prop_assert!((u.variance - want).abs() <= 1e-12 * want.abs().max(1e-300) + 1e-9 * 1e-3);
        prop_assert!(u.variance >= noise);
    }

    #[test]
    fn weight_is_non_increasing_in_variance(a in 0.0f64..100.0, b in 0.0f64..100.0, beta in 0.01f64..5.0, inv_std in any::<bool>()) {
        let w = if inv_std { Weighting::InverseStd } else { Weighting::InverseVariance };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let c = cfg(beta, w);
        prop_assert!(weight_from_variance(lo, &c) >= weight_from_variance(hi, &c));
        let wt = weight_from_variance(hi, &c);
        prop_assert!((0.0..=1.5).contains(&wt));
    }

    #[test]
    fn common_rescaling_of_beta_and_variance_leaves_weights(v in 1e-3f64..50.0, beta in 0.05f64..3.0, scale in 0.1f64..10.0) {
        let base = weight_from_variance(v, &cfg(beta, Weighting::InverseVariance));
        let scaled = weight_from_variance(v * scale, &cfg(beta * scale, Weighting::InverseVariance));
        prop_assert!((base - scaled).abs() < 1e-12);
        // for inverse-std, β scales with the standard deviation
        let base = weight_from_variance(v, &cfg(beta, Weighting::InverseStd));
        let scaled = weight_from_variance(v * scale * scale, &cfg(beta * scale, Weighting::InverseStd));
        prop_assert!((base - scaled).abs() < 1e-12);
    }

    #[test]
    fn target_samples_are_reproducible(seed in any::<u64>(), base in any::<u64>()) {
        let pair = critics(seed, 0.1);
        let cands = Matrix::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.7, -0.7]).unwrap();
        let s = [0.2, 0.9, 0.0, -0.1];
        let a = mc_target_samples(&pair, &s, &cands, 0.75, 8, base).unwrap();
        let b = mc_target_samples(&pair, &s, &cands, 0.75, 8, base).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn ensemble_variance_ignores_member_order(seed in any::<u64>(), k in 2usize..6) {
        let spec = MlpSpec::new(vec![6, 8, 1], Activation::Tanh, 0.0).unwrap();
        let mut rng = rng_from_seed(seed);
        let members: Vec<MlpParams> = (0..k).map(|_| MlpParams::init(&spec, &mut rng).unwrap()).collect();
        let mut rev = members.clone();
        rev.reverse();
        let x = Matrix::from_vec(2, 6, (0..12).map(|i| i as f64 / 10.0 - 0.5).collect()).unwrap();
        let a = ensemble_variance(&members, &x).unwrap();
        let b = ensemble_variance(&rev, &x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            prop_assert!((u.variance - v.variance).abs() <= 1e-12 * (1.0 + u.variance));
        }
    }
}

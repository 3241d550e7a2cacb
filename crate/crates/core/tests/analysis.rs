use proptest::prelude::*;
use uwac::analysis::{
    chebyshev_bound_check, detect_q_explosion, roc_auc, uncertainty_heatmap, uniform_edges, ActionSource, BoundedDist, HeatmapGrid,
    UncertaintySource,
};
use uwac::env::lander::{X_BOUND, Y_MAX};
use uwac::env::{generate_dataset, Behavior, EnvConfig, LanderState};
use uwac::nets::{Activation, MlpParams, MlpSpec};
use uwac::rng::rng_from_seed;
use uwac::trainer::MetricsRow;

fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for p in pos {
        for n in neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // a coarse lattice so ties actually occur
    prop::collection::vec((-20i32..20).prop_map(|v| v as f64 / 4.0), 1..40)
}

fn row(epoch: usize, q: f64, ret: f64) -> MetricsRow {
    MetricsRow {
        epoch,
        eval_return: ret,
        q_target_mean: q,
        weight_mean: 1.0,
        critic_loss: 0.0,
        actor_loss: 0.0,
        mmd_mean: 0.0,
        target_var_mean: 0.0,
    }
}

#[test]
fn auc_spec_examples() {
    assert_eq!(roc_auc(&[5.0, 6.0], &[1.0, 2.0]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[1.0, 4.0, 4.0], &[4.0, 1.0, 4.0]).unwrap(), 0.5);
    assert_eq!(roc_auc(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 0.875);
    assert!(roc_auc(&[1.0], &[]).is_err());
}

#[test]
fn zero_dropout_gives_an_all_zero_grid() {
    let d = generate_dataset(&EnvConfig::default(), &Behavior::expert(), 3, 4).unwrap();
    let spec = MlpSpec::new(vec![6, 16, 16, 1], Activation::Relu, 0.0).unwrap();
    let mut rng = rng_from_seed(0);
    let (q1, q2) = (MlpParams::init(&spec, &mut rng).unwrap(), MlpParams::init(&spec, &mut rng).unwrap());
    let unc = UncertaintySource::Dropout { q1: &q1, q2: &q2, lambda: 0.75, passes: 8, seed: 1 };
    let xs = uniform_edges(-X_BOUND, X_BOUND, 10).unwrap();
    let ys = uniform_edges(0.0, Y_MAX, 10).unwrap();
    let g = uncertainty_heatmap(&unc, &d, ActionSource::Dataset, &xs, &ys).unwrap();
    assert_eq!(g.cells.iter().map(|c| c.count).sum::<usize>(), d.len());
    assert!(g.cells.iter().all(|c| c.mean_uncertainty == 0.0));
}

#[test]
fn explosion_thresholds() {
    let healthy: Vec<MetricsRow> = (0..10).map(|e| row(e, 40.0, 50.0)).collect();
    assert_eq!(detect_q_explosion(&healthy, 5.0), None);
    let mut rows = healthy.clone();
    rows[6] = row(6, 1000.0, 10.0);
    assert_eq!(detect_q_explosion(&rows, 5.0), Some(6));
    rows[8] = row(8, f64::NAN, 10.0);
    assert_eq!(detect_q_explosion(&rows, 500.0), Some(8));
}

#[test]
fn uniform_on_unit_interval_never_reaches_two_sigma() {
    let r = chebyshev_bound_check(&BoundedDist::Uniform { lo: -1.0, hi: 1.0 }, 1.0, 2.0, 1.0, 50_000, 9).unwrap();
    assert_eq!(r.empirical_probability, 0.0);
    assert_eq!(r.bound, 0.25);
    assert!(r.holds);
}

fn bounded_dist(depth: u32) -> BoxedStrategy<BoundedDist> {
    let leaf = prop_oneof![
        (-1.0f64..1.0).prop_map(|value| BoundedDist::Degenerate { value }),
        (-1.0f64..1.0, 0.0f64..1.0).prop_map(|(a, w)| BoundedDist::Uniform { lo: a.min(a + w).max(-1.0), hi: (a + w).min(1.0) }),
        (-1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b, p)| BoundedDist::TwoPoint { a, b, p }),
        prop::collection::vec((-1.0f64..1.0, 0.01f64..1.0), 1..6).prop_map(|vp| BoundedDist::Discrete {
            values: vp.iter().map(|v| v.0).collect(),
            probs: vp.iter().map(|v| v.1).collect(),
        }),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        2 => leaf,
        1 => prop::collection::vec((0.05f64..1.0, bounded_dist(depth - 1)), 1..4).prop_map(|wc| BoundedDist::Mixture {
            weights: wc.iter().map(|v| v.0).collect(),
            components: wc.into_iter().map(|v| v.1).collect(),
        }),
    ]
    .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn auc_matches_pairwise_count(pos in scores(), neg in scores()) {
        prop_assert!((roc_auc(&pos, &neg).unwrap() - brute_auc(&pos, &neg)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(pos in scores(), neg in scores(), k in 0.1f64..3.0, shift in -5.0f64..5.0) {
        let f = |v: &f64| (k * v + shift).exp();
        let a = roc_auc(&pos, &neg).unwrap();
        let b = roc_auc(&pos.iter().map(f).collect::<Vec<_>>(), &neg.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn auc_swapping_classes_complements(pos in prop::collection::vec(-1e3f64..1e3, 1..30), neg in prop::collection::vec(-1e3f64..1e3, 1..30)) {
        prop_assume!(pos.iter().all(|p| !neg.contains(p)));
        let a = roc_auc(&pos, &neg).unwrap();
        prop_assert!((roc_auc(&neg, &pos).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn heatmap_cells_match_brute_force(
        pts in prop::collection::vec((-2.5f64..2.5, -0.5f64..2.5, -2.0f64..2.0, -2.0f64..2.0, 0.0f64..10.0), 1..120),
        nx in 2usize..8,
        ny in 2usize..8,
    ) {
        let xs = uniform_edges(-X_BOUND, X_BOUND, nx).unwrap();
        let ys = uniform_edges(0.0, Y_MAX, ny).unwrap();
        let states: Vec<LanderState> = pts.iter().map(|p| LanderState::new(p.0, p.1, p.2, p.3)).collect();
        let values: Vec<f64> = pts.iter().map(|p| p.4).collect();
        let g = HeatmapGrid::accumulate(&xs, &ys, &states, &values).unwrap();
        for i in 0..nx {
            for j in 0..ny {
                let inside = |v: f64, e: &[f64], k: usize| v >= e[k] && (v < e[k + 1] || (k + 2 == e.len() && v == e[k + 1]));
                let members: Vec<usize> = (0..states.len()).filter(|&n| inside(states[n].x, &xs, i) && inside(states[n].y, &ys, j)).collect();
                let c = g.cell(i, j);
                prop_assert_eq!(c.count, members.len());
                if !members.is_empty() {
                    let m = members.len() as f64;
                    let u = members.iter().map(|&n| values[n]).sum::<f64>() / m;
                    let sp = members.iter().map(|&n| (states[n].vx.powi(2) + states[n].vy.powi(2)).sqrt()).sum::<f64>() / m;
                    prop_assert!((c.mean_uncertainty - u).abs() < 1e-10);
                    prop_assert!((c.mean_speed - sp).abs() < 1e-10);
                }
            }
        }
        let back = HeatmapGrid::from_csv(&g.to_csv().unwrap(), &xs, &ys).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn raising_the_ratio_never_flags_earlier(
        qs in prop::collection::vec((-1e4f64..1e4, -100.0f64..100.0), 1..30),
        lo in 0.5f64..20.0,
        extra in 0.0f64..50.0,
    ) {
        let rows: Vec<MetricsRow> = qs.iter().enumerate().map(|(e, (q, r))| row(e, *q, *r)).collect();
        let a = detect_q_explosion(&rows, lo);
        let b = detect_q_explosion(&rows, lo + extra);
        match (a, b) {
            (None, Some(_)) => prop_assert!(false, "flagged only at the higher ratio"),
            (Some(x), Some(y)) => prop_assert!(y >= x),
            _ => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn chebyshev_holds_for_random_bounded_mixtures(d in bounded_dist(2), k in prop_oneof![Just(1.5), Just(2.0), Just(4.0)], beta in 0.2f64..3.0, seed in any::<u64>()) {
        let r = chebyshev_bound_check(&d, beta, k, 1.0, 20_000, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.empirical_probability));
        prop_assert!(r.holds, "{:?}", r);
    }
}

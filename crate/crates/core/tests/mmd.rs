use proptest::prelude::*;
use uwac::mmd::{mmd_squared, mmd_squared_batch, mmd_squared_value, Estimator, Kernel, MmdConfig};
use uwac::ndcore::{grad_check, Graph, Matrix};

fn cfg(kernel: Kernel, sigma: f64) -> MmdConfig {
    MmdConfig { kernel, sigma, estimator: Estimator::V }
}

/// Direct double sums over every pair, written independently of the library.
fn brute(x: &[Vec<f64>], y: &[Vec<f64>], c: &MmdConfig) -> f64 {
    let k = |a: &[f64], b: &[f64]| match c.kernel {
        Kernel::Gaussian => (-a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / (2.0 * c.sigma)).exp(),
        Kernel::Laplacian => (-a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / c.sigma).exp(),
    };
    let mean = |s: &[Vec<f64>], t: &[Vec<f64>]| {
        let mut acc = 0.0;
        for a in s {
            for b in t {
                acc += k(a, b);
            }
        }
        acc / (s.len() * t.len()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

fn to_matrix(rows: &[Vec<f64>]) -> Matrix {
    Matrix::from_vec(rows.len(), rows[0].len(), rows.concat()).unwrap()
}

fn points(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), 1..7)
}

fn kernel() -> impl Strategy<Value = Kernel> {
    prop_oneof![Just(Kernel::Gaussian), Just(Kernel::Laplacian)]
}

#[test]
fn singleton_closed_form() {
    let c = cfg(Kernel::Gaussian, 2.0);
    for d in [0.0, 0.5, 1.0, 3.0] {
        let v = mmd_squared_value(&Matrix::column(&[0.0]), &Matrix::column(&[d]), &c).unwrap();
        assert!((v - (2.0 - 2.0 * (-d * d / 4.0f64).exp())).abs() < 1e-14);
    }
}

#[test]
fn separation_grows_with_translation() {
    for kernel in [Kernel::Gaussian, Kernel::Laplacian] {
        let sigma = 1.5;
        let c = cfg(kernel, sigma);
        let base: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin() * 0.4).collect();
        let mut prev = -1.0;
        for step in 0..=60 {
            let shift = 3.0 * sigma * step as f64 / 60.0;
            let moved: Vec<f64> = base.iter().map(|v| v + shift).collect();
            let v = mmd_squared_value(&Matrix::column(&base), &Matrix::column(&moved), &c).unwrap();
            assert!(v > prev || step == 0, "{kernel:?} shift {shift}: {v} <= {prev}");
            prev = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn value_and_graph_match_brute_force(x in points(2), y in points(2), k in kernel(), sigma in 0.2f64..20.0) {
        let c = cfg(k, sigma);
        let want = brute(&x, &y, &c).max(0.0);
        let v = mmd_squared_value(&to_matrix(&x), &to_matrix(&y), &c).unwrap();
        prop_assert!((v - want).abs() < 1e-12);
        let mut g = Graph::new();
        let xv = g.param(to_matrix(&x));
        let out = mmd_squared(&mut g, xv, &to_matrix(&y), &c).unwrap();
        prop_assert!((g.scalar(out).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn symmetric_and_non_negative(x in points(2), y in points(2), k in kernel(), sigma in 0.2f64..20.0) {
        let c = cfg(k, sigma);
        let xy = mmd_squared_value(&to_matrix(&x), &to_matrix(&y), &c).unwrap();
        let yx = mmd_squared_value(&to_matrix(&y), &to_matrix(&x), &c).unwrap();
        prop_assert!((xy - yx).abs() < 1e-12);
        prop_assert!(xy >= 0.0);
        prop_assert_eq!(mmd_squared_value(&to_matrix(&x), &to_matrix(&x), &c).unwrap(), 0.0);
    }

    #[test]
    fn batch_rows_equal_per_state_values(
        xs in prop::collection::vec(-1.0f64..1.0, 3 * 4 * 2),
        ys in prop::collection::vec(-1.0f64..1.0, 3 * 5 * 2),
        k in kernel(),
    ) {
        let c = cfg(k, 1.0);
        let x = Matrix::from_vec(12, 2, xs).unwrap();
        let y = Matrix::from_vec(15, 2, ys).unwrap();
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let out = mmd_squared_batch(&mut g, xv, 4, &y, 5, &c).unwrap();
        for s in 0..3 {
            let xs = x.gather_rows(&(s * 4..s * 4 + 4).collect::<Vec<_>>()).unwrap();
            let ys = y.gather_rows(&(s * 5..s * 5 + 5).collect::<Vec<_>>()).unwrap();
            let want = mmd_squared_value(&xs, &ys, &c).unwrap();
            prop_assert!((g.value(out).get(s, 0) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(
        xs in prop::collection::vec(-1.0f64..1.0, 4 * 2),
        ys in prop::collection::vec(-1.0f64..1.0, 3 * 2),
        sigma in 0.3f64..5.0,
    ) {
        let y = Matrix::from_vec(3, 2, ys).unwrap();
        let x = Matrix::from_vec(4, 2, xs).unwrap();
        prop_assume!(mmd_squared_value(&x, &y, &cfg(Kernel::Gaussian, sigma)).unwrap() > 1e-6);
        let err = grad_check(
            |g, v| mmd_squared(g, v[0], &y, &cfg(Kernel::Gaussian, sigma)),
            &[x],
            1e-5,
        )
        .unwrap();
        prop_assert!(err < 1e-5, "{}", err);
    }
}

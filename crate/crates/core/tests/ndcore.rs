use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use uwac::ndcore::{grad_check, spectral_normalize, Graph, Matrix, SpectralState, Var};
use uwac::nets::{Activation, MlpParams, MlpSpec};
use uwac::rng::rng_from_seed;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn svd_sigma_max(m: &Matrix) -> f64 {
    let d = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

#[test]
fn power_iteration_is_monotone_and_converges() {
    for seed in 0..5 {
        let w = random_matrix(64, 64, seed);
        let exact = svd_sigma_max(&w);
        let mut st = SpectralState::new(64, &mut rng_from_seed(100 + seed));
        let mut prev = 0.0;
        let mut last = 0.0;
        for _ in 0..400 {
            let s = st.estimate(&w, 1).unwrap();
            assert!(s >= prev * (1.0 - 1e-12), "estimate decreased: {prev} -> {s}");
            prev = s;
            last = s;
        }
        assert!(((last - exact) / exact).abs() < 1e-3, "{last} vs svd {exact}");
    }
}

#[test]
fn normalized_weights_have_unit_spectral_norm() {
    for (seed, (r, c)) in [(8, 5), (3, 12), (20, 20), (64, 32)].into_iter().enumerate() {
        let w = random_matrix(r, c, 40 + seed as u64).scaled(3.0);
        let mut st = SpectralState::new(r, &mut rng_from_seed(seed as u64));
        let (n, _) = spectral_normalize(&w, &mut st, 200).unwrap();
        assert!(svd_sigma_max(&n) <= 1.0 + 1e-3);
    }
}

#[test]
fn three_layer_tanh_mlp_gradient() {
    let spec = MlpSpec::new(vec![3, 6, 5, 1], Activation::Tanh, 0.0).unwrap();
    let p = MlpParams::init(&spec, &mut rng_from_seed(2)).unwrap();
    let x = random_matrix(4, 3, 9);
    let params: Vec<Matrix> = p.tensors().into_iter().cloned().collect();
    let err = grad_check(
        |g, vars| {
            let b = uwac::nets::BoundMlp::from_vars(&spec, vars)?;
            let xv = g.constant(x.clone());
            let y = b.forward(g, xv, uwac::nets::DropoutMode::Off)?;
            Ok(g.sum(y))
        },
        &params,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn graphs_are_bit_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let a = g.param(random_matrix(5, 4, 1));
        let w = g.param(random_matrix(3, 4, 2));
        let b = g.param(random_matrix(1, 3, 3));
        let h = g.affine(a, w, b).unwrap();
        let h = g.tanh(h);
        let s = g.softplus(h);
        let r = g.mean(s).unwrap();
        g.backward(r).unwrap();
        (g.scalar(r).unwrap().to_bits(), g.grad(a).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn detached_branch_receives_no_gradient() {
    let mut g = Graph::new();
    let x = g.param(Matrix::column(&[1.0, -2.0, 0.5]));
    let c = g.param(Matrix::column(&[3.0, 1.0, 2.0]));
    let sq = g.square(c);
    let stopped = g.detach(sq);
    let y = g.mul(stopped, x).unwrap();
    let r = g.sum(y);
    g.backward(r).unwrap();
    assert_eq!(g.grad(c).data(), &[0.0, 0.0, 0.0]);
    assert_eq!(g.grad(x).data(), &[9.0, 1.0, 4.0]);
}

const OPS: usize = 24;

/// Applies differentiable op `op` to two 3×4 leaves and reads the result out
/// through fixed weights so every gradient entry is generically non-zero.
fn build_op(g: &mut Graph, vars: &[Var], op: usize, readout: &[f64]) -> uwac::Result<Var> {
    let (a, b) = (vars[0], vars[1]);
    let y = match op {
        0 => g.tanh(a),
        1 => g.relu(a),
        2 => g.exp(a),
        3 => {
            let s = g.abs(a);
            let s = g.add_scalar(s, 0.1);
            g.ln(s)?
        }
        4 => g.softplus(a),
        5 => g.abs(a),
        6 => g.square(a),
        7 => g.scale(a, -1.7),
        8 => g.neg(a),
        9 => g.add_scalar(a, 0.3),
        10 => g.clamp(a, -1.0, 0.5),
        11 => g.add(a, b)?,
        12 => g.sub(a, b)?,
        13 => g.mul(a, b)?,
        14 => g.min(a, b)?,
        15 => g.max(a, b)?,
        16 => g.mul_const(a, Matrix::from_vec(3, 4, readout[..12].iter().rev().copied().collect())?)?,
        17 => {
            let s = g.sum(a);
            g.mul(s, s)?
        }
        18 => {
            let m = g.mean(a)?;
            g.mul(m, m)?
        }
        19 => {
            let r = g.row_sum(a);
            g.mul(r, r)?
        }
        20 => {
            let r = g.group_sum(a, 3)?;
            g.mul(r, r)?
        }
        21 => {
            let c = g.concat_cols(a, b)?;
            let sq = g.square(c);
            g.row_sum(sq)
        }
        22 => {
            let r = g.gather_rows(a, vec![2, 0, 2, 1])?;
            g.mul(r, r)?
        }
        _ => {
            let w = g.constant(Matrix::from_vec(4, 4, readout[..16].to_vec())?);
            let bias = g.constant(Matrix::row_vector(&readout[16..20]));
            let h = g.affine(a, w, bias)?;
            let bt = g.affine(b, w, bias)?;
            g.mul(h, bt)?
        }
    };
    let (r, c) = g.value(y).shape();
    let cw = g.constant(Matrix::from_vec(r, c, (0..r * c).map(|i| readout[i % readout.len()]).collect())?);
    let out = g.mul(y, cw)?;
    Ok(g.sum(out))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn op_gradients_match_finite_differences(
        op in 0..OPS,
        a in prop::collection::vec(-2.0f64..2.0, 12),
        b in prop::collection::vec(-2.0f64..2.0, 12),
        readout in prop::collection::vec(0.2f64..1.0, 20),
    ) {
        let params = [Matrix::from_vec(3, 4, a).unwrap(), Matrix::from_vec(3, 4, b).unwrap()];
        let err = grad_check(|g, v| build_op(g, v, op, &readout), &params, 1e-5).unwrap();
        prop_assert!(err < 1e-4, "op {}: {}", op, err);
    }

    #[test]
    fn matmul_matches_nalgebra(r in 1usize..9, k in 1usize..9, c in 1usize..9, seed in any::<u64>()) {
        let a = random_matrix(r, k, seed);
        let b = random_matrix(k, c, seed ^ 1);
        let ours = a.matmul(&b).unwrap();
        let na = DMatrix::from_row_slice(r, k, a.data()) * DMatrix::from_row_slice(k, c, b.data());
        for i in 0..r {
            for j in 0..c {
                prop_assert!((ours.get(i, j) - na[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

use approx::assert_abs_diff_eq;
use coplan::linalg::{
    cholesky, precision_update, ridge_solve, uncertainty_quad_form, whitened_infnorm_direction, PrecisionState,
    SignedBasis,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn vectors(d: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), count)
}

fn gram(features: &[Vec<f64>], lambda: f64, d: usize) -> DMatrix<f64> {
    let mut v = DMatrix::<f64>::identity(d, d) * lambda;
    for phi in features {
        let x = DVector::from_column_slice(phi);
        v += &x * x.transpose();
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incremental_factor_matches_batch(
        (d, features) in (1usize..8).prop_flat_map(|d| (Just(d), vectors(d, 12))),
        lambda in 0.01..2.0f64,
    ) {
        let mut state = PrecisionState::new(d, lambda).unwrap();
        for phi in &features {
            state = precision_update(&state, phi).unwrap();
        }
        let batch = gram(&features, lambda, d);
        let l = cholesky(batch.as_slice(), d).unwrap();
        for (a, b) in state.factor().iter().zip(&l) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        let oracle = batch.clone().cholesky().unwrap().l();
        for i in 0..d {
            for j in 0..=i {
                prop_assert!((state.factor()[i * d + j] - oracle[(i, j)]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn ridge_residual_is_small(
        (d, features) in (1usize..8).prop_flat_map(|d| (Just(d), vectors(d, 10))),
        targets in prop::collection::vec(-5.0..5.0f64, 10),
        lambda in 1e-4..1.0f64,
    ) {
        let w = ridge_solve(&features, &targets, lambda, d).unwrap();
        let v = gram(&features, lambda, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for (phi, q) in features.iter().zip(&targets) {
            rhs += DVector::from_column_slice(phi) * *q;
        }
        let residual = (&v * DVector::from_column_slice(&w) - rhs).norm();
        let qnorm = targets.iter().map(|q| q * q).sum::<f64>().sqrt();
        prop_assert!(residual <= 1e-9 * (1.0 + qnorm));
    }

    #[test]
    fn quad_form_matches_inverse(
        (d, features) in (1usize..8).prop_flat_map(|d| (Just(d), vectors(d, 6))),
        phi in prop::collection::vec(-1.0..1.0f64, 8),
        lambda in 0.05..2.0f64,
    ) {
        let mut state = PrecisionState::new(d, lambda).unwrap();
        for f in &features {
            state.update(f).unwrap();
        }
        let x = DVector::from_column_slice(&phi[..d]);
        let inv = gram(&features, lambda, d).try_inverse().unwrap();
        let expected = (x.transpose() * inv * &x)[(0, 0)];
        let got = uncertainty_quad_form(&state, &phi[..d]).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * (1.0 + expected));
    }

    /// `(1/d) φᵀV⁻¹φ ≤ max_v ⟨Lv, φ⟩² ≤ φᵀV⁻¹φ` with `LLᵀ = V⁻¹`.
    #[test]
    fn norm_sandwich(
        (d, features) in (1usize..10).prop_flat_map(|d| (Just(d), vectors(d, 15))),
        phi in prop::collection::vec(-1.0..1.0f64, 10),
        lambda in 1e-3..1.0f64,
    ) {
        let mut state = PrecisionState::new(d, lambda).unwrap();
        for f in &features {
            state.update(f).unwrap();
        }
        let phi = &phi[..d];
        let quad = uncertainty_quad_form(&state, phi).unwrap();
        let mut best = 0.0f64;
        for i in 0..d {
            for v in [SignedBasis::positive(i), SignedBasis::negative(i)] {
                let dir = whitened_infnorm_direction(&state, v).unwrap();
                let x: f64 = dir.iter().zip(phi).map(|(a, b)| a * b).sum();
                best = best.max(x * x);
            }
        }
        prop_assert!(quad / d as f64 <= best + 1e-12);
        prop_assert!(best <= quad + 1e-12);
    }
}

#[test]
fn whitening_is_the_cholesky_factor_of_the_inverse() {
    let mut state = PrecisionState::new(3, 0.5).unwrap();
    for phi in [[1.0, 0.2, 0.0], [0.0, -0.7, 1.0], [0.3, 0.3, 0.3]] {
        state.update(&phi).unwrap();
    }
    let l = state.inverse_cholesky().unwrap();
    let oracle = DMatrix::from_row_slice(3, 3, &state.matrix()).try_inverse().unwrap().cholesky().unwrap().l();
    for i in 0..3 {
        for j in 0..3 {
            assert_abs_diff_eq!(l[i * 3 + j], oracle[(i, j)], epsilon = 1e-12);
        }
        let col = whitened_infnorm_direction(&state, SignedBasis::negative(i)).unwrap();
        for j in 0..3 {
            assert_abs_diff_eq!(col[j], -oracle[(j, i)], epsilon = 1e-12);
        }
    }
}

#[test]
fn two_by_two_ridge() {
    // V = [[2, 1], [1, 2]], Φᵀq = (1, 1): w = (1/3, 1/3).
    let w = ridge_solve(&[vec![1.0, 1.0]], &[1.0], 1.0, 2).unwrap();
    assert_abs_diff_eq!(w[0], 1.0 / 3.0, epsilon = 1e-14);
    assert_abs_diff_eq!(w[1], 1.0 / 3.0, epsilon = 1e-14);
}

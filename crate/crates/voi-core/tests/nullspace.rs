use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voi_core::*;

#[test]
fn single_state_two_actions() {
    let b = constraint_nullspace_basis(1, 2);
    assert_eq!(b.shape(), (2, 1));
    let r = 1.0 / 2f64.sqrt();
    assert!((b[(0, 0)] - r).abs() < 1e-15 && (b[(1, 0)] + r).abs() < 1e-15);
}

#[test]
fn two_states_three_actions() {
    let b = constraint_nullspace_basis(2, 3);
    assert_eq!(b.ncols(), 4);
    for col in b.column_iter() {
        for s in 0..2 {
            assert!(col.rows(s * 3, 3).sum().abs() < 1e-12);
        }
    }
    assert!((b.transpose() * &b - DMatrix::identity(4, 4)).amax() < 1e-12);
}

#[test]
fn single_action_gives_empty_basis() {
    assert_eq!(constraint_nullspace_basis(3, 1).shape(), (3, 0));
}

#[test]
fn projected_hessian_positive_at_ba_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let q = QTable { values: DMatrix::from_fn(4, 3, |_, _| rng.gen::<f64>()) };
    let prior = StateDistribution::uniform(4);
    let theta = ExplorationRate::new(2.0).unwrap();
    let sol = ba_solve(&q, &prior, theta, 1e-12, 1_000_000).unwrap();
    let h = lagrangian_hessian(&q, &sol.policy, &sol.beta, &prior, &sol.marginal, theta).unwrap();
    let d = projected_hessian_definiteness(&h, &constraint_nullspace_basis(4, 3), Convention::MinimizationPositive);
    assert!(d.is_solution);
    assert!(d.extreme_eigenvalue > 0.0);
    let d = projected_hessian_definiteness(&h, &constraint_nullspace_basis(4, 3), Convention::MaximizationNegative);
    assert!(!d.is_solution);
}

#[test]
fn projected_value_for_uniform_single_state() {
    let h = lagrangian_hessian_raw(&DMatrix::from_element(1, 2, 0.5), &StateDistribution::uniform(1), 1.0);
    let d = projected_hessian_definiteness(&h, &constraint_nullspace_basis(1, 2), Convention::default());
    assert!(d.is_solution);
    assert!((d.extreme_eigenvalue - 2.0).abs() < 1e-12);
}

#[test]
fn zero_block_is_boundary_for_both_conventions() {
    let h = VoiHessian { matrix: DMatrix::zeros(6, 6), n_states: 2, n_actions: 2 };
    let basis = constraint_nullspace_basis(2, 2);
    for conv in [Convention::MinimizationPositive, Convention::MaximizationNegative] {
        let d = projected_hessian_definiteness(&h, &basis, conv);
        assert!(d.is_solution);
        assert_eq!(d.extreme_eigenvalue, 0.0);
    }
}

proptest! {
    #[test]
    fn basis_spans_constraint_kernel(n in 1usize..9, m in 2usize..6) {
        let b = constraint_nullspace_basis(n, m);
        prop_assert_eq!(b.ncols(), n * (m - 1));
        let j = constraint_jacobian(n, m);
        prop_assert!((j * &b).amax() <= 1e-12);
        prop_assert!((b.transpose() * &b - DMatrix::identity(b.ncols(), b.ncols())).amax() <= 1e-12);
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voi_core::*;

fn theta(x: f64) -> ExplorationRate {
    ExplorationRate::new(x).unwrap()
}

fn random_q(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QTable {
    QTable { values: DMatrix::from_fn(n, m, |_, _| rng.gen::<f64>()) }
}

/// Damped fixed-point iteration on plain arrays, independent of the crate.
fn damped_oracle(q: &[Vec<f64>], prior: &[f64], th: f64, tol: f64) -> Vec<Vec<f64>> {
    let (n, m) = (q.len(), q[0].len());
    let mut p = vec![1.0 / m as f64; m];
    let mut pi = vec![vec![0.0; m]; n];
    for _ in 0..1_000_000 {
        for s in 0..n {
            let w: Vec<f64> = (0..m).map(|a| p[a] * (-th * q[s][a]).exp()).collect();
            let z: f64 = w.iter().sum();
            for a in 0..m {
                pi[s][a] = w[a] / z;
            }
        }
        let mut delta: f64 = 0.0;
        for a in 0..m {
            let target: f64 = (0..n).map(|s| prior[s] * pi[s][a]).sum();
            let next = 0.5 * p[a] + 0.5 * target;
            delta = delta.max((next - p[a]).abs());
            p[a] = next;
        }
        if delta < tol {
            break;
        }
    }
    pi
}

#[test]
fn tiny_theta_gives_marginal_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let q = random_q(&mut rng, 4, 3);
    let prior = StateDistribution::uniform(4);
    let sol = ba_solve(&q, &prior, theta(1e-6), 1e-6, 1000).unwrap();
    for s in 0..4 {
        for a in 0..3 {
            assert!((sol.policy.get(s, a) - sol.marginal.probs()[a]).abs() < 1e-4);
        }
    }
    let mi = mutual_information(&sol.policy, &prior, &sol.marginal).unwrap();
    assert!(mi < 1e-6);
}

#[test]
fn huge_theta_gives_argmin_deltas() {
    let q = QTable::from_rows(&[vec![0.3, 0.1, 0.9], vec![0.5, 0.7, 0.2], vec![0.1, 0.4, 0.8]]);
    let prior = StateDistribution::uniform(3);
    let sol = ba_solve(&q, &prior, theta(1e6), 1e-10, 10_000).unwrap();
    for s in 0..3 {
        let best = q.argmin(s);
        for a in 0..3 {
            let p = sol.policy.get(s, a);
            if a == best {
                assert!(p > 1.0 - 1e-9);
            } else {
                assert!(p < 1e-9);
            }
        }
    }
}

#[test]
fn two_by_two_matches_damped_oracle() {
    let rows = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    let oracle = damped_oracle(&rows, &[0.5, 0.5], 1.0, 1e-14);
    let sol = ba_solve(&QTable::from_rows(&rows), &StateDistribution::uniform(2), theta(1.0), 1e-10, 100_000).unwrap();
    for s in 0..2 {
        for a in 0..2 {
            assert!((sol.policy.get(s, a) - oracle[s][a]).abs() < 1e-9);
        }
    }
    // symmetry fixes the marginal at one half, leaving a logistic row
    assert!((oracle[0][0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-9);
}

#[test]
fn random_problems_match_damped_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..5 {
        let n = rng.gen_range(2..6);
        let m = rng.gen_range(2..5);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let prior = vec![1.0 / n as f64; n];
        let th = 4.0;
        let oracle = damped_oracle(&rows, &prior, th, 1e-15);
        let sol = ba_solve(&QTable::from_rows(&rows), &StateDistribution::uniform(n), theta(th), 1e-13, 1_000_000).unwrap();
        for s in 0..n {
            for a in 0..m {
                assert!((sol.policy.get(s, a) - oracle[s][a]).abs() < 1e-6, "{s},{a}");
            }
        }
    }
}

#[test]
fn iteration_limit_carries_last_iterate() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = random_q(&mut rng, 4, 3);
    match ba_solve(&q, &StateDistribution::uniform(4), theta(2.0), 1e-15, 3) {
        Err(VoiError::IterationLimit { iterations, residual, last }) => {
            assert_eq!(iterations, 3);
            assert!(residual > 0.0);
            assert_eq!(last.policy.n_states(), 4);
        }
        other => panic!("expected iteration limit, got {other:?}"),
    }
}

#[test]
fn ba_rejects_bad_tolerance() {
    assert!(ba_solve(&QTable::zeros(2, 2), &StateDistribution::uniform(2), theta(1.0), 0.0, 10).is_err());
}

#[test]
fn gradient_vanishes_at_ba_point() {
    let prior = StateDistribution::uniform(2);
    let th = theta(1.0);
    let sol = ba_solve(&q22(), &prior, th, 1e-12, 100_000).unwrap();
    let g = lagrangian_gradient(&q22(), &sol.policy, &sol.beta, &prior, &sol.marginal, th).unwrap();
    assert!(g.norm_inf() <= 1e-8);
    assert!(kkt_residual(&q22(), &sol.policy, &sol.beta, &prior, &sol.marginal, th).unwrap() <= 1e-8);
}

fn q22() -> QTable {
    QTable::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]])
}

#[test]
fn kkt_detects_non_stationary_points() {
    let q = QTable::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.2]]);
    let prior = StateDistribution::uniform(2);
    let r = kkt_residual(&q, &Policy::uniform(2, 2), &Multipliers::zeros(2), &prior, &ActionMarginal::uniform(2), theta(1.0))
        .unwrap();
    assert!(r > 0.0);
}

#[test]
fn kkt_grows_with_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_q(&mut rng, 3, 3);
    let prior = StateDistribution::uniform(3);
    let th = theta(1.5);
    let sol = ba_solve(&q, &prior, th, 1e-12, 1_000_000).unwrap();
    let mut last = kkt_residual(&q, &sol.policy, &sol.beta, &prior, &sol.marginal, th).unwrap();
    for eps in [1e-4, 1e-3, 1e-2] {
        let mut raw = sol.policy.probs().clone();
        raw[(0, 0)] += eps;
        let r = kkt_residual_raw(&q, &raw, &sol.beta.beta, &prior, sol.marginal.probs(), th.value(), DEFAULT_FLOOR);
        assert!(r > last, "eps {eps}: {r} <= {last}");
        last = r;
    }
}

#[test]
fn floored_entries_count_only_wrong_sign() {
    // past the support boundary one action sits on the floor; the solver
    // output must still be first-order optimal
    let q = QTable::from_rows(&[vec![0.0, 5.0], vec![0.1, 5.2]]);
    let prior = StateDistribution::uniform(2);
    let th = theta(10.0);
    let sol = ba_solve(&q, &prior, th, 1e-12, 1_000_000).unwrap();
    assert!(sol.policy.get(0, 1) < 1e-10);
    assert!(kkt_residual(&q, &sol.policy, &sol.beta, &prior, &sol.marginal, th).unwrap() <= 1e-10);
}

fn random_instance(seed: u64) -> (QTable, StateDistribution, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..7);
    let m = rng.gen_range(2..5);
    let q = QTable { values: DMatrix::from_fn(n, m, |_, _| rng.gen_range(0.0..2.0)) };
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    let prior = StateDistribution::new(w.iter().map(|x| x / total).collect()).unwrap();
    (q, prior, rng.gen_range(0.1..8.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ba_output_is_first_order_optimal(seed in any::<u64>()) {
        let (q, prior, th) = random_instance(seed);
        let tol = 1e-10;
        let sol = ba_solve(&q, &prior, theta(th), tol, 2_000_000).unwrap();
        let r = kkt_residual(&q, &sol.policy, &sol.beta, &prior, &sol.marginal, theta(th)).unwrap();
        prop_assert!(r <= 10.0 * tol, "kkt {}", r);
    }

    #[test]
    fn mutual_information_grows_with_theta(seed in any::<u64>()) {
        let (q, prior, _) = random_instance(seed);
        let mut last = -1.0;
        for th in [0.1, 0.3, 1.0, 3.0, 10.0, 30.0] {
            let sol = ba_solve(&q, &prior, theta(th), 1e-13, 2_000_000).unwrap();
            let mi = mutual_information(&sol.policy, &prior, &sol.marginal).unwrap();
            prop_assert!(mi >= last - 1e-8, "theta {}: {} < {}", th, mi, last);
            last = mi;
        }
    }

    #[test]
    fn per_state_cost_shifts_leave_policy_unchanged(seed in any::<u64>(), shift in prop::collection::vec(-3.0f64..3.0, 6)) {
        let (q, prior, th) = random_instance(seed);
        let mut shifted = q.clone();
        for s in 0..q.n_states() {
            for a in 0..q.n_actions() {
                shifted.values[(s, a)] += shift[s];
            }
        }
        let a = ba_solve(&q, &prior, theta(th), 1e-13, 2_000_000).unwrap();
        let b = ba_solve(&shifted, &prior, theta(th), 1e-13, 2_000_000).unwrap();
        prop_assert!((a.policy.probs() - b.policy.probs()).amax() <= 1e-10);
    }

    #[test]
    fn mutual_information_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..6);
        let m = rng.gen_range(1..5);
        let policy = Policy::new(DMatrix::from_fn(n, m, |_, _| rng.gen::<f64>()), DEFAULT_FLOOR).unwrap();
        let prior = StateDistribution::uniform(n);
        let marginal = ActionMarginal::from_policy(&policy, &prior).unwrap();
        let mi = mutual_information(&policy, &prior, &marginal).unwrap();
        prop_assert!(mi >= -1e-15);
        let constant = Policy::constant(n, &marginal);
        prop_assert!(mutual_information(&constant, &prior, &marginal).unwrap().abs() < 1e-14);
    }
}

#[test]
fn multipliers_from_gibbs_rows_are_closed_form() {
    let q = q22();
    let prior = StateDistribution::uniform(2);
    let rows = gibbs_policy(&q, &DVector::from_vec(vec![0.5, 0.5]), 1.0, DEFAULT_FLOOR);
    let beta = rows.multipliers(&prior, 1.0);
    let z: f64 = 0.5 * (-1.0f64).exp() + 0.5 * (-2.0f64).exp();
    assert!((beta.beta[0] - 0.5 * (z.ln() - 1.0)).abs() < 1e-14);
}

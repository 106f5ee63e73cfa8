use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rl_driver::*;
use voi_core::{Policy, QTable, StateDistribution};

fn q() -> QTable {
    QTable::from_rows(&[vec![0.4, 0.1, 0.9, 0.3], vec![2.0, 1.0, 0.5, 3.0]])
}

#[test]
fn delta_rows_always_pick_their_action() {
    let p = Policy::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!((0..10_000).all(|_| action_from_policy(&p, 0, &mut rng) == 2));
}

#[test]
fn uniform_rows_draw_uniformly() {
    let p = Policy::uniform(1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = [0usize; 4];
    let draws = 100_000;
    for _ in 0..draws {
        counts[action_from_policy(&p, 0, &mut rng)] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 0.25).abs() < 0.01, "{counts:?}");
    }
}

#[test]
fn greedy_limit_puts_all_mass_on_the_cheapest_action() {
    let p = baseline_policy(BaselineKind::EpsilonGreedy, &q(), 0.0).unwrap();
    assert!((p.get(0, 1) - 1.0).abs() < 1e-9);
    assert!((p.get(1, 2) - 1.0).abs() < 1e-9);
}

#[test]
fn full_exploration_is_uniform() {
    let p = baseline_policy(BaselineKind::EpsilonGreedy, &q(), 1.0).unwrap();
    for s in 0..2 {
        for a in 0..4 {
            assert!((p.get(s, a) - 0.25).abs() < 1e-12);
        }
    }
}

#[test]
fn epsilon_greedy_mass_split() {
    let p = baseline_policy(BaselineKind::EpsilonGreedy, &q(), 0.55).unwrap();
    assert!((p.get(0, 1) - (0.45 + 0.55 / 4.0)).abs() < 1e-12);
    assert!((p.get(0, 0) - 0.55 / 4.0).abs() < 1e-12);
}

#[test]
fn softmax_matches_boltzmann_weights() {
    let tau = 0.55;
    let p = baseline_policy(BaselineKind::Softmax, &q(), tau).unwrap();
    let row = [0.4f64, 0.1, 0.9, 0.3];
    let z: f64 = row.iter().map(|c| (-c / tau).exp()).sum();
    for (a, c) in row.iter().enumerate() {
        assert!((p.get(0, a) - (-c / tau).exp() / z).abs() < 1e-12);
    }
}

#[test]
fn invalid_rates_are_rejected() {
    assert!(baseline_policy(BaselineKind::EpsilonGreedy, &q(), 1.5).is_err());
    assert!(baseline_policy(BaselineKind::Softmax, &q(), 0.0).is_err());
}

fn delta(n: usize, m: usize, a: usize) -> Policy {
    Policy::new(DMatrix::from_fn(n, m, |_, j| if j == a { 1.0 } else { 0.0 }), 1e-12).unwrap()
}

#[test]
fn unchanged_deterministic_policy_raises_the_rate() {
    let rule = CrossEntropyRule::default();
    let p = delta(3, 2, 0);
    let prior = StateDistribution::uniform(3);
    let rate = cross_entropy_adapt(&rule, 0.2, &p, &p, &prior).unwrap();
    assert!((rate - 0.2 * 1.025).abs() < 1e-12);
}

#[test]
fn large_policy_change_lowers_the_rate() {
    let rule = CrossEntropyRule::default();
    let then = delta(1, 2, 0);
    let keep = (-0.4f64).exp();
    let now = Policy::from_rows(&[vec![keep, 1.0 - keep]]).unwrap();
    let prior = StateDistribution::uniform(1);
    let ce = policy_cross_entropy(&now, &then, &prior).unwrap();
    assert!((ce - 0.4).abs() < 1e-9);
    let rate = cross_entropy_adapt(&rule, 0.2, &now, &then, &prior).unwrap();
    assert!((rate - 0.2 * 0.925).abs() < 1e-12);
}

#[test]
fn adapted_rate_stays_in_bounds() {
    let rule = CrossEntropyRule::default();
    let p = delta(2, 2, 1);
    let prior = StateDistribution::uniform(2);
    assert_eq!(cross_entropy_adapt(&rule, 0.75, &p, &p, &prior).unwrap(), 0.75);
    let now = delta(2, 2, 0);
    assert_eq!(cross_entropy_adapt(&rule, 0.0101, &now, &p, &prior).unwrap(), 0.01);
}

#[test]
fn schedule_state_waits_for_the_lag() {
    let rule = CrossEntropyRule { lag: 3, ..Default::default() };
    let mut state = ScheduleState::new(rule, 0.5).unwrap();
    let p = delta(2, 2, 0);
    let prior = StateDistribution::uniform(2);
    for _ in 0..3 {
        assert_eq!(state.observe(&p, &prior).unwrap(), 0.5);
    }
    assert!((state.observe(&p, &prior).unwrap() - 0.5 * 1.025).abs() < 1e-12);
}

#[test]
fn inverse_polynomial_hits_both_endpoints() {
    let s = InversePolynomial::new(0.6, 1e-4, 2000).unwrap();
    assert_eq!(s.value(0), 0.6);
    assert!((s.value(1999) - 1e-4).abs() < 1e-15);
    assert_eq!(s.value(5000), 1e-4);
    let c = (0.6 / 1e-4 - 1.0) / 1999f64.powf(0.8);
    assert!((s.value(10) - 0.6 / (1.0 + c * 10f64.powf(0.8))).abs() < 1e-15);
    assert!((1..2000).all(|k| s.value(k) <= s.value(k - 1)));
}

proptest! {
    #[test]
    fn baseline_rows_are_distributions(
        vals in prop::collection::vec(-10.0..10.0f64, 12),
        eps in 0.0..=1.0f64, tau in 0.01..5.0f64,
    ) {
        let q = QTable { values: DMatrix::from_row_slice(3, 4, &vals) };
        for p in [baseline_policy(BaselineKind::EpsilonGreedy, &q, eps).unwrap(), baseline_policy(BaselineKind::Softmax, &q, tau).unwrap()] {
            for s in 0..3 {
                let row = p.row(s);
                prop_assert!(row.iter().all(|x| x.is_finite() && *x > 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voi_core::*;

struct Point {
    q: QTable,
    pi: DMatrix<f64>,
    beta: DVector<f64>,
    prior: StateDistribution,
    marginal: DVector<f64>,
    theta: f64,
}

fn random_point(seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..6);
    let m = rng.gen_range(2..5);
    let q = QTable { values: DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..2.0)) };
    let pi = DMatrix::from_fn(n, m, |_, _| rng.gen_range(0.05..1.0));
    let beta = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let prior = StateDistribution::new(w.iter().map(|x| x / total).collect()).unwrap();
    let marginal = DVector::from_fn(m, |_, _| rng.gen_range(0.1..1.0));
    let theta = rng.gen_range(0.2..5.0);
    Point { q, pi, beta, prior, marginal, theta }
}

fn value(p: &Point, x: &DVector<f64>) -> f64 {
    let (n, m) = p.pi.shape();
    let pi = DMatrix::from_fn(n, m, |s, a| x[s * m + a]);
    let beta = x.rows(n * m, n).into_owned();
    lagrangian_value_raw(&p.q, &pi, &beta, &p.prior, &p.marginal, p.theta)
}

fn gradient(p: &Point, x: &DVector<f64>) -> DVector<f64> {
    let (n, m) = p.pi.shape();
    let pi = DMatrix::from_fn(n, m, |s, a| x[s * m + a]);
    let beta = x.rows(n * m, n).into_owned();
    lagrangian_gradient_raw(&p.q, &pi, &beta, &p.prior, &p.marginal, p.theta).to_vector()
}

fn stack(p: &Point) -> DVector<f64> {
    let (n, m) = p.pi.shape();
    DVector::from_fn(n * m + n, |i, _| if i < n * m { p.pi[(i / m, i % m)] } else { p.beta[i - n * m] })
}

fn gradient_error(p: &Point) -> f64 {
    let x = stack(p);
    let g = gradient(p, &x);
    let h = 1e-5;
    let fd = DVector::from_fn(x.len(), |i, _| {
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[i] += h;
        dn[i] -= h;
        (value(p, &up) - value(p, &dn)) / (2.0 * h)
    });
    (&g - fd).amax() / g.amax().max(1e-12)
}

fn hessian_error(p: &Point) -> f64 {
    let x = stack(p);
    let hess = lagrangian_hessian_raw(&p.pi, &p.prior, p.theta).matrix;
    let h = 1e-5;
    let mut fd = DMatrix::zeros(x.len(), x.len());
    for j in 0..x.len() {
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[j] += h;
        dn[j] -= h;
        fd.set_column(j, &((gradient(p, &up) - gradient(p, &dn)) / (2.0 * h)));
    }
    (&hess - fd).amax() / hess.amax().max(1e-12)
}

#[test]
fn constraint_block_vanishes_for_stochastic_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let policy = Policy::new(DMatrix::from_fn(4, 3, |_, _| rng.gen::<f64>()), DEFAULT_FLOOR).unwrap();
    let q = QTable::zeros(4, 3);
    let prior = StateDistribution::uniform(4);
    let g = lagrangian_gradient(
        &q,
        &policy,
        &Multipliers::zeros(4),
        &prior,
        &ActionMarginal::uniform(3),
        ExplorationRate::new(1.0).unwrap(),
    )
    .unwrap();
    assert!(g.wrt_beta.amax() <= 1e-12);
    assert_eq!(g.to_vector().len(), 4 * 3 + 4);
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..20 {
        let err = gradient_error(&random_point(seed));
        assert!(err <= 1e-6, "seed {seed}: {err}");
    }
}

#[test]
fn hessian_matches_central_differences() {
    for seed in 0..20 {
        let err = hessian_error(&random_point(seed));
        assert!(err <= 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn hessian_is_symmetric_with_zero_corner() {
    let p = random_point(9);
    let h = lagrangian_hessian_raw(&p.pi, &p.prior, p.theta);
    assert!((&h.matrix - h.matrix.transpose()).amax() <= 1e-12);
    let (n, m) = p.pi.shape();
    let corner = h.matrix.view((n * m, n * m), (n, n));
    assert!(corner.iter().all(|&x| x == 0.0));
    // no coupling between different states in the policy block
    for i in 0..n * m {
        for j in 0..n * m {
            if i != j {
                assert_eq!(h.matrix[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn hessian_diagonal_for_single_state() {
    let policy = Policy::uniform(1, 2);
    let h = lagrangian_hessian(
        &QTable::zeros(1, 2),
        &policy,
        &Multipliers::zeros(1),
        &StateDistribution::uniform(1),
        &ActionMarginal::uniform(2),
        ExplorationRate::new(1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(h.matrix.shape(), (3, 3));
    assert!((h.matrix[(0, 0)] - 2.0).abs() < 1e-15);
    assert!((h.matrix[(1, 1)] - 2.0).abs() < 1e-15);
}

#[test]
fn theta_derivative_matches_differences() {
    let p = random_point(17);
    let (n, m) = p.pi.shape();
    let h = 1e-6;
    let at = |t: f64| lagrangian_gradient_raw(&p.q, &p.pi, &p.beta, &p.prior, &p.marginal, t).to_vector();
    let fd = (at(p.theta + h) - at(p.theta - h)) / (2.0 * h);
    let exact = theta_derivative_raw(&p.pi, &p.prior, &p.marginal, p.theta);
    assert_eq!(exact.len(), n * m + n);
    assert!((exact - fd).amax() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derivatives_agree_with_differences(seed in any::<u64>()) {
        let p = random_point(seed);
        prop_assert!(gradient_error(&p) <= 1e-5);
        prop_assert!(hessian_error(&p) <= 1e-5);
    }
}

//! The Lagrangian `L = F + sum_s beta_s (sum_a pi(a|s) - 1)` with the action
//! marginal held fixed, so that `F = sum p(s) pi Q + (1/theta) sum p(s) pi ln(pi / p(a))`
//! up to a policy-independent constant.

use nalgebra::{DMatrix, DVector};

use crate::{
    check_shapes, ActionMarginal, ExplorationRate, Multipliers, Policy, QTable, Result, StateDistribution, VoiError,
    VoiGradient, VoiHessian,
};

pub fn lagrangian_value_raw(
    q: &QTable,
    pi: &DMatrix<f64>,
    beta: &DVector<f64>,
    prior: &StateDistribution,
    marginal: &DVector<f64>,
    theta: f64,
) -> f64 {
    let (n, m) = pi.shape();
    let mut total = 0.0;
    for s in 0..n {
        let mut row_sum = 0.0;
        for a in 0..m {
            let x = pi[(s, a)];
            total += prior[s] * (x * q.values[(s, a)] + x * (x / marginal[a]).ln() / theta);
            row_sum += x;
        }
        total += beta[s] * (row_sum - 1.0);
    }
    total
}

/// Gradient on a raw (possibly unnormalized) policy table. Entries must be positive.
pub fn lagrangian_gradient_raw(
    q: &QTable,
    pi: &DMatrix<f64>,
    beta: &DVector<f64>,
    prior: &StateDistribution,
    marginal: &DVector<f64>,
    theta: f64,
) -> VoiGradient {
    let (n, m) = pi.shape();
    let mut wrt_policy = DVector::zeros(n * m);
    let mut wrt_beta = DVector::zeros(n);
    for s in 0..n {
        let ps = prior[s];
        let mut row_sum = 0.0;
        for a in 0..m {
            let x = pi[(s, a)];
            wrt_policy[s * m + a] = ps * q.values[(s, a)] + ps / theta * ((x / marginal[a]).ln() + 1.0) + beta[s];
            row_sum += x;
        }
        wrt_beta[s] = row_sum - 1.0;
    }
    VoiGradient { wrt_policy, wrt_beta }
}

/// Derivative of the gradient with respect to theta (the constraint block is zero).
pub fn theta_derivative_raw(pi: &DMatrix<f64>, prior: &StateDistribution, marginal: &DVector<f64>, theta: f64) -> DVector<f64> {
    let (n, m) = pi.shape();
    let mut out = DVector::zeros(n * m + n);
    for s in 0..n {
        for a in 0..m {
            out[s * m + a] = -prior[s] / (theta * theta) * ((pi[(s, a)] / marginal[a]).ln() + 1.0);
        }
    }
    out
}

pub fn lagrangian_hessian_raw(pi: &DMatrix<f64>, prior: &StateDistribution, theta: f64) -> VoiHessian {
    let (n, m) = pi.shape();
    let k = n * m;
    let mut matrix = DMatrix::zeros(k + n, k + n);
    for s in 0..n {
        for a in 0..m {
            let i = s * m + a;
            matrix[(i, i)] = prior[s] / (theta * pi[(s, a)]);
            matrix[(k + s, i)] = 1.0;
            matrix[(i, k + s)] = 1.0;
        }
    }
    VoiHessian { matrix, n_states: n, n_actions: m }
}

/// Constraint Jacobian: row `s` has ones on the action block of state `s`.
pub fn constraint_jacobian(n_states: usize, n_actions: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_states, n_states * n_actions, |s, i| if i / n_actions == s { 1.0 } else { 0.0 })
}

fn check_beta(beta: &Multipliers, n: usize) -> Result<()> {
    if beta.beta.len() != n {
        return Err(VoiError::Dimension(format!("beta has {} entries, expected {n}", beta.beta.len())));
    }
    Ok(())
}

pub fn lagrangian_gradient(
    q: &QTable,
    policy: &Policy,
    beta: &Multipliers,
    prior: &StateDistribution,
    marginal: &ActionMarginal,
    theta: ExplorationRate,
) -> Result<VoiGradient> {
    check_shapes(q, policy.probs(), prior, marginal)?;
    check_beta(beta, policy.n_states())?;
    Ok(lagrangian_gradient_raw(q, policy.probs(), &beta.beta, prior, marginal.probs(), theta.value()))
}

/// Hessian of the Lagrangian. It does not depend on `q`, `beta` or the
/// marginal; they are accepted for a uniform call shape and checked.
pub fn lagrangian_hessian(
    q: &QTable,
    policy: &Policy,
    beta: &Multipliers,
    prior: &StateDistribution,
    marginal: &ActionMarginal,
    theta: ExplorationRate,
) -> Result<VoiHessian> {
    check_shapes(q, policy.probs(), prior, marginal)?;
    check_beta(beta, policy.n_states())?;
    Ok(lagrangian_hessian_raw(policy.probs(), prior, theta.value()))
}

/// First-order optimality residual: the larger of the stationarity and
/// feasibility sup norms.
///
/// Entries sitting on the probability floor are bound-constrained, so only a
/// negative gradient there counts as a violation.
pub fn kkt_residual(
    q: &QTable,
    policy: &Policy,
    beta: &Multipliers,
    prior: &StateDistribution,
    marginal: &ActionMarginal,
    theta: ExplorationRate,
) -> Result<f64> {
    check_shapes(q, policy.probs(), prior, marginal)?;
    check_beta(beta, policy.n_states())?;
    Ok(kkt_residual_raw(q, policy.probs(), &beta.beta, prior, marginal.probs(), theta.value(), policy.floor()))
}

pub fn kkt_residual_raw(
    q: &QTable,
    pi: &DMatrix<f64>,
    beta: &DVector<f64>,
    prior: &StateDistribution,
    marginal: &DVector<f64>,
    theta: f64,
    floor: f64,
) -> f64 {
    let g = lagrangian_gradient_raw(q, pi, beta, prior, marginal, theta);
    let m = pi.ncols();
    let mut worst = g.wrt_beta.amax();
    for (i, &gi) in g.wrt_policy.iter().enumerate() {
        let at_floor = pi[(i / m, i % m)] <= floor * (1.0 + 1e-9);
        let v = if at_floor { (-gi).max(0.0) } else { gi.abs() };
        worst = worst.max(v);
    }
    worst
}

use nalgebra::DMatrix;

use crate::{check_shapes, check_states, ActionMarginal, ExplorationRate, Policy, QTable, Result, StateDistribution, VoiError};

/// Benefit `f` and the minimized objective `F = -f + MI / theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub f: f64,
    pub big_f: f64,
    pub mutual_information: f64,
    pub expected_cost: f64,
}

/// `sum_s p(s) sum_a pi(a|s) ln(pi(a|s) / p(a))`, in nats.
pub fn mutual_information(policy: &Policy, prior: &StateDistribution, marginal: &ActionMarginal) -> Result<f64> {
    check_states(policy.n_states(), prior)?;
    if marginal.len() != policy.n_actions() {
        return Err(VoiError::Dimension(format!(
            "marginal has {} actions, policy has {}",
            marginal.len(),
            policy.n_actions()
        )));
    }
    Ok(mi_raw(policy.probs(), prior, marginal))
}

pub(crate) fn mi_raw(pi: &DMatrix<f64>, prior: &StateDistribution, marginal: &ActionMarginal) -> f64 {
    let p = marginal.probs();
    let mut total = 0.0;
    for s in 0..pi.nrows() {
        let mut row = 0.0;
        for a in 0..pi.ncols() {
            let x = pi[(s, a)];
            if x > 0.0 {
                row += x * (x / p[a]).ln();
            }
        }
        total += prior[s] * row;
    }
    total
}

/// Evaluates the criterion.
///
/// `f = min_a sum_s p(s) Q(s,a) - sum_{s,a} p(s) pi(a|s) Q(s,a)` is the
/// benefit of state information over the best state-blind action; the
/// minimized quantity is `F = -f + MI / theta`.
pub fn voi_objective(
    q: &QTable,
    policy: &Policy,
    prior: &StateDistribution,
    marginal: &ActionMarginal,
    theta: ExplorationRate,
) -> Result<Objective> {
    check_shapes(q, policy.probs(), prior, marginal)?;
    let (n, m) = q.values.shape();
    let blind = (0..m)
        .map(|a| (0..n).map(|s| prior[s] * q.values[(s, a)]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let expected_cost: f64 = (0..n)
        .map(|s| prior[s] * (0..m).map(|a| policy.get(s, a) * q.values[(s, a)]).sum::<f64>())
        .sum();
    let f = blind - expected_cost;
    let mi = mi_raw(policy.probs(), prior, marginal);
    Ok(Objective { f, big_f: -f + mi / theta.value(), mutual_information: mi, expected_cost })
}

/// Number of clusters of policy rows, where a row joins the first earlier
/// cluster whose representative is within `tol` in the sup norm.
pub fn state_groups(policy: &Policy, tol: f64) -> usize {
    let probs = policy.probs();
    let mut reps: Vec<usize> = Vec::new();
    for s in 0..probs.nrows() {
        let close = reps.iter().any(|&r| {
            (0..probs.ncols()).map(|a| (probs[(s, a)] - probs[(r, a)]).abs()).fold(0.0, f64::max) <= tol
        });
        if !close {
            reps.push(s);
        }
    }
    reps.len()
}

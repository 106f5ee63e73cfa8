//! Blahut-Arimoto alternation between the Gibbs policy and the action marginal.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{
    check_states, ActionMarginal, ExplorationRate, Multipliers, Policy, QTable, Result, StateDistribution, VoiError,
    DEFAULT_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub floor: f64,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions { tol: 1e-12, max_iter: 1_000_000, floor: DEFAULT_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaSolution {
    pub policy: Policy,
    /// The marginal that generated `policy`, so stationarity holds exactly.
    pub marginal: ActionMarginal,
    pub beta: Multipliers,
    pub iterations: usize,
    /// Sup-norm policy change of the last iteration.
    pub change: f64,
}

/// Gibbs rows `pi(a|s) ∝ p(a) exp(-theta Q(s,a))` with entries that would fall
/// below the floor pinned to it.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsRows {
    pub pi: DMatrix<f64>,
    /// `ln Z(s)` for the unshifted costs, restricted to free entries.
    pub log_z: DVector<f64>,
    pub pinned: Vec<bool>,
}

impl GibbsRows {
    /// `beta_s = (p(s)/theta)(ln Z(s) - 1)`, which zeroes the stationarity residual.
    pub fn multipliers(&self, prior: &StateDistribution, theta: f64) -> Multipliers {
        Multipliers { beta: DVector::from_fn(self.log_z.len(), |s, _| prior[s] / theta * (self.log_z[s] - 1.0)) }
    }
}

pub fn gibbs_policy(q: &QTable, marginal: &DVector<f64>, theta: f64, floor: f64) -> GibbsRows {
    let (n, m) = q.values.shape();
    let mut pi = DMatrix::zeros(n, m);
    let mut log_z = DVector::zeros(n);
    let mut pinned = vec![false; n * m];
    let mut w = vec![0.0; m];
    for s in 0..n {
        let qmin = q.row_min(s);
        let mut top = f64::NEG_INFINITY;
        for a in 0..m {
            w[a] = marginal[a].ln() - theta * (q.values[(s, a)] - qmin);
            top = top.max(w[a]);
        }
        w.iter_mut().for_each(|x| *x = (*x - top).exp());
        let pin = &mut pinned[s * m..(s + 1) * m];
        let mut z;
        loop {
            let n_pinned = pin.iter().filter(|&&p| p).count();
            let free: f64 = (0..m).filter(|&a| !pin[a]).map(|a| w[a]).sum();
            z = free / (1.0 - n_pinned as f64 * floor);
            let mut changed = false;
            for a in 0..m {
                if !pin[a] && w[a] / z < floor {
                    pin[a] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for a in 0..m {
            pi[(s, a)] = if pin[a] { floor } else { w[a] / z };
        }
        log_z[s] = z.ln() + top - theta * qmin;
    }
    GibbsRows { pi, log_z, pinned }
}

/// Solves from the uniform marginal.
pub fn ba_solve(
    q: &QTable,
    prior: &StateDistribution,
    theta: ExplorationRate,
    tol: f64,
    max_iter: usize,
) -> Result<BaSolution> {
    let opts = BaOptions { tol, max_iter, ..BaOptions::default() };
    ba_solve_from(q, prior, theta, &ActionMarginal::uniform(q.n_actions()), &opts)
}

pub fn ba_solve_from(
    q: &QTable,
    prior: &StateDistribution,
    theta: ExplorationRate,
    init: &ActionMarginal,
    opts: &BaOptions,
) -> Result<BaSolution> {
    check_states(q.n_states(), prior)?;
    if init.len() != q.n_actions() {
        return Err(VoiError::Dimension(format!("marginal has {} actions, Q has {}", init.len(), q.n_actions())));
    }
    if !(opts.tol > 0.0) {
        return Err(VoiError::Invalid(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let th = theta.value();
    let (n, m) = q.values.shape();
    let mut marginal = ActionMarginal::new(init.probs().clone(), opts.floor)?;
    let mut prev: Option<DMatrix<f64>> = None;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let rows = gibbs_policy(q, marginal.probs(), th, opts.floor);
        if let Some(p) = &prev {
            change = (&rows.pi - p).amax();
        }
        let done = change < opts.tol;
        if done || it == opts.max_iter {
            let solution = BaSolution {
                policy: Policy::new(rows.pi.clone(), opts.floor)?,
                beta: rows.multipliers(prior, th),
                marginal,
                iterations: it,
                change,
            };
            if done {
                return Ok(solution);
            }
            return Err(VoiError::IterationLimit { iterations: it, residual: change, last: Box::new(solution) });
        }
        let next = DVector::from_fn(m, |a, _| (0..n).map(|s| prior[s] * rows.pi[(s, a)]).sum());
        marginal = ActionMarginal::new(next, opts.floor)?;
        prev = Some(rows.pi);
    }
    Err(VoiError::Invalid("max_iter must be at least 1".into()))
}

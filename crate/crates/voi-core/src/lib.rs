//! Value-of-information criterion: mutual information, the Lagrangian with its
//! gradient and Hessian, optimality checks, and a Blahut-Arimoto solver.
//!
//! Policies are `n x m` tables (states by actions). Whenever a policy is
//! flattened the index of `(s, a)` is `s * m + a`, and the multipliers follow
//! at `m * n + s`.

mod criterion;
mod lagrangian;
mod nullspace;
mod solver;

pub use criterion::{mutual_information, state_groups, voi_objective, Objective};
pub use lagrangian::{
    constraint_jacobian, kkt_residual, kkt_residual_raw, lagrangian_gradient, lagrangian_gradient_raw,
    lagrangian_hessian, lagrangian_hessian_raw, lagrangian_value_raw, theta_derivative_raw,
};
pub use nullspace::{constraint_nullspace_basis, projected_hessian_definiteness, Convention, Definiteness};
pub use solver::{ba_solve, ba_solve_from, gibbs_policy, BaOptions, BaSolution, GibbsRows};

pub use mdp_env::StateDistribution;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default lower bound on every policy and marginal entry.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VoiError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("no convergence after {iterations} iterations (last change {residual:e})")]
    IterationLimit { iterations: usize, residual: f64, last: Box<BaSolution> },
}

pub type Result<T> = std::result::Result<T, VoiError>;

/// Action costs-to-go, `n_states x n_actions`. Lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: DMatrix<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable { values: DMatrix::zeros(n_states, n_actions) }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        QTable { values: DMatrix::from_fn(n, m, |s, a| rows[s][a]) }
    }

    pub fn n_states(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.values.ncols()
    }

    /// Index of the smallest entry in row `s`, first one on ties.
    pub fn argmin(&self, s: usize) -> usize {
        let row = self.values.row(s);
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] < row[best] {
                best = a;
            }
        }
        best
    }

    pub fn row_min(&self, s: usize) -> f64 {
        self.values.row(s).min()
    }

    /// Rows restricted to the given states, in order.
    pub fn select_rows(&self, states: &[usize]) -> QTable {
        QTable { values: DMatrix::from_fn(states.len(), self.n_actions(), |i, a| self.values[(states[i], a)]) }
    }
}

/// Row-stochastic action probabilities `pi(a|s)` with every entry at least `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    probs: DMatrix<f64>,
    floor: f64,
}

impl Policy {
    /// Clamps entries to `floor` and renormalizes rows.
    pub fn new(mut probs: DMatrix<f64>, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor * probs.ncols() as f64 <= 1.0) {
            return Err(VoiError::Invalid(format!("floor {floor} incompatible with {} actions", probs.ncols())));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(VoiError::Invalid("policy entries must be finite".into()));
        }
        let (n, m) = probs.shape();
        let mut row = vec![0.0; m];
        for s in 0..n {
            for a in 0..m {
                row[a] = probs[(s, a)];
            }
            normalize_with_floor(&mut row, floor)?;
            for a in 0..m {
                probs[(s, a)] = row[a];
            }
        }
        Ok(Policy { probs, floor })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self::new(DMatrix::from_fn(n, m, |s, a| rows[s][a]), DEFAULT_FLOOR)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy { probs: DMatrix::from_element(n_states, n_actions, 1.0 / n_actions as f64), floor: DEFAULT_FLOOR }
    }

    /// Every row equal to `marginal`.
    pub fn constant(n_states: usize, marginal: &ActionMarginal) -> Self {
        let m = marginal.len();
        Policy {
            probs: DMatrix::from_fn(n_states, m, |_, a| marginal.probs()[a]),
            floor: marginal.floor(),
        }
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    pub fn row(&self, s: usize) -> Vec<f64> {
        self.probs.row(s).iter().copied().collect()
    }

    /// Flattened `(s, a) -> s * m + a`.
    pub fn flatten(&self) -> DVector<f64> {
        let (n, m) = self.probs.shape();
        DVector::from_fn(n * m, |i, _| self.probs[(i / m, i % m)])
    }
}

/// Action marginal `p(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMarginal {
    probs: DVector<f64>,
    floor: f64,
}

impl ActionMarginal {
    pub fn new(mut probs: DVector<f64>, floor: f64) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(VoiError::Invalid("marginal entries must be finite and >= 0".into()));
        }
        if !(floor > 0.0 && floor * probs.len() as f64 <= 1.0) {
            return Err(VoiError::Invalid(format!("floor {floor} incompatible with {} actions", probs.len())));
        }
        normalize_with_floor(probs.as_mut_slice(), floor)?;
        Ok(ActionMarginal { probs, floor })
    }

    pub fn uniform(n_actions: usize) -> Self {
        ActionMarginal { probs: DVector::from_element(n_actions, 1.0 / n_actions as f64), floor: DEFAULT_FLOOR }
    }

    /// `p(a) = sum_s p(s) pi(a|s)`.
    pub fn from_policy(policy: &Policy, prior: &StateDistribution) -> Result<Self> {
        check_states(policy.n_states(), prior)?;
        let m = policy.n_actions();
        let probs = DVector::from_fn(m, |a, _| (0..policy.n_states()).map(|s| prior[s] * policy.get(s, a)).sum());
        Self::new(probs, policy.floor())
    }

    /// Delta (up to the floor) on the action with the lowest prior-averaged cost.
    pub fn no_information_optimum(q: &QTable, prior: &StateDistribution, floor: f64) -> Result<Self> {
        check_states(q.n_states(), prior)?;
        let avg: Vec<f64> =
            (0..q.n_actions()).map(|a| (0..q.n_states()).map(|s| prior[s] * q.values[(s, a)]).sum()).collect();
        let mut best = 0;
        for a in 1..avg.len() {
            if avg[a] < avg[best] {
                best = a;
            }
        }
        let mut probs = DVector::zeros(q.n_actions());
        probs[best] = 1.0;
        Self::new(probs, floor)
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.probs
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// The Lagrange parameter `theta`; `1/theta` is the exploration rate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ExplorationRate(f64);

impl ExplorationRate {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(ExplorationRate(value))
        } else {
            Err(VoiError::Invalid(format!("theta must be positive and finite, got {value}")))
        }
    }

    /// Like [`ExplorationRate::new`] but also requires `min < value < max`.
    pub fn bounded(value: f64, min: f64, max: f64) -> Result<Self> {
        if !(min < value && value < max) {
            return Err(VoiError::Invalid(format!("theta {value} outside ({min}, {max})")));
        }
        Self::new(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Simplex multipliers, one per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub beta: DVector<f64>,
}

impl Multipliers {
    pub fn zeros(n_states: usize) -> Self {
        Multipliers { beta: DVector::zeros(n_states) }
    }
}

/// Lagrangian gradient split into the policy block and the constraint block.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiGradient {
    pub wrt_policy: DVector<f64>,
    pub wrt_beta: DVector<f64>,
}

impl VoiGradient {
    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.wrt_policy.len() + self.wrt_beta.len());
        v.rows_mut(0, self.wrt_policy.len()).copy_from(&self.wrt_policy);
        v.rows_mut(self.wrt_policy.len(), self.wrt_beta.len()).copy_from(&self.wrt_beta);
        v
    }

    pub fn norm_inf(&self) -> f64 {
        self.wrt_policy.amax().max(self.wrt_beta.amax())
    }
}

/// Symmetric `(mn + n)`-square Lagrangian Hessian `[H, J^T; J, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiHessian {
    pub matrix: DMatrix<f64>,
    pub n_states: usize,
    pub n_actions: usize,
}

impl VoiHessian {
    /// The `mn x mn` policy block.
    pub fn policy_block(&self) -> DMatrix<f64> {
        let k = self.n_states * self.n_actions;
        self.matrix.view((0, 0), (k, k)).into_owned()
    }
}

/// Rescales `v` onto the simplex keeping every entry at least `floor`:
/// entries below the floor are pinned to it and the rest share the remainder.
fn normalize_with_floor(v: &mut [f64], floor: f64) -> Result<()> {
    if v.iter().any(|x| *x < 0.0) || v.iter().sum::<f64>() <= 0.0 {
        return Err(VoiError::Invalid("probabilities must be >= 0 with a positive total".into()));
    }
    let mut pinned: Vec<bool> = v.iter().map(|&x| x <= floor).collect();
    loop {
        let k = pinned.iter().filter(|&&p| p).count();
        let free: f64 = v.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(x, _)| *x).sum();
        if free <= 0.0 {
            v.iter_mut().for_each(|x| *x = 1.0 / pinned.len() as f64);
            return Ok(());
        }
        let scale = (1.0 - k as f64 * floor) / free;
        let mut changed = false;
        for (x, p) in v.iter().zip(pinned.iter_mut()) {
            if !*p && *x * scale < floor {
                *p = true;
                changed = true;
            }
        }
        if !changed {
            for (x, &p) in v.iter_mut().zip(&pinned) {
                *x = if p { floor } else { *x * scale };
            }
            return Ok(());
        }
    }
}

pub(crate) fn check_states(n: usize, prior: &StateDistribution) -> Result<()> {
    if prior.len() != n {
        return Err(VoiError::Dimension(format!("prior has {} states, expected {n}", prior.len())));
    }
    Ok(())
}

pub(crate) fn check_shapes(q: &QTable, pi: &DMatrix<f64>, prior: &StateDistribution, marginal: &ActionMarginal) -> Result<()> {
    if q.values.shape() != pi.shape() {
        return Err(VoiError::Dimension(format!("Q is {:?} but policy is {:?}", q.values.shape(), pi.shape())));
    }
    check_states(pi.nrows(), prior)?;
    if marginal.len() != pi.ncols() {
        return Err(VoiError::Dimension(format!("marginal has {} actions, expected {}", marginal.len(), pi.ncols())));
    }
    Ok(())
}

//! The value-of-information Lagrangian as a residual system, a multi-branch
//! path tracer over the exploration parameter, and an incremental handle for
//! use inside a learning loop.
//!
//! The action marginal is fixed inside [`VoiSystem`]; after every accepted
//! corrector step the marginal is brought back into agreement with the policy
//! by Blahut-Arimoto sweeps. Actions whose marginal sits on the floor are
//! watched: once one of them would grow under the sweep the trivial branch
//! loses optimality, and the tracer splits into an entering branch and a
//! restricted branch that keeps the action suppressed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use voi_core::{
    gibbs_policy, kkt_residual, mutual_information, state_groups, voi_objective, ActionMarginal, BaOptions,
    ExplorationRate, GibbsRows, Multipliers, Policy, QTable, StateDistribution, DEFAULT_FLOOR,
};

use crate::{
    adaptive_steplength, compute_tangent, correct_pal_weighted, correct_parameter, predictor, ContinuationError,
    ContinuationPoint, PointKind, ResidualSystem, Result, SingularEvent, TangentVector, TraceOptions, TraceStatus,
};

/// Lagrangian gradient in `x = (pi flattened, beta)` with the marginal fixed.
/// Entries pinned to the floor are replaced by `pi - floor = 0`.
#[derive(Debug, Clone)]
pub struct VoiSystem {
    q: QTable,
    prior: StateDistribution,
    marginal: DVector<f64>,
    floor: f64,
    pinned: Vec<bool>,
}

impl VoiSystem {
    pub fn new(q: &QTable, prior: &StateDistribution, marginal: &ActionMarginal, pinned: Vec<bool>) -> Result<Self> {
        let (n, m) = q.values.shape();
        if prior.len() != n || marginal.len() != m || pinned.len() != n * m {
            return Err(ContinuationError::Invalid(format!(
                "shapes disagree: Q {n}x{m}, prior {}, marginal {}, mask {}",
                prior.len(),
                marginal.len(),
                pinned.len()
            )));
        }
        Ok(VoiSystem {
            q: q.clone(),
            prior: prior.clone(),
            marginal: marginal.probs().clone(),
            floor: marginal.floor(),
            pinned,
        })
    }

    pub fn n_states(&self) -> usize {
        self.q.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.q.n_actions()
    }

    /// Stacks Gibbs rows and multipliers into a continuation point.
    pub fn point(rows: &GibbsRows, beta: &Multipliers, theta: f64) -> ContinuationPoint {
        let (n, m) = rows.pi.shape();
        let x = DVector::from_fn(n * m + n, |i, _| if i < n * m { rows.pi[(i / m, i % m)] } else { beta.beta[i - n * m] });
        ContinuationPoint { x, theta, arclen: 0.0, residual_norm: 0.0 }
    }

    pub fn policy_table(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (n, m) = (self.n_states(), self.n_actions());
        DMatrix::from_fn(n, m, |s, a| x[s * m + a])
    }

    /// Policy read from `x` after floor clamping.
    pub fn policy_of(&self, x: &DVector<f64>) -> Result<Policy> {
        Ok(Policy::new(self.policy_table(x).map(|v| v.max(self.floor)), self.floor)?)
    }

    pub fn beta_of(&self, x: &DVector<f64>) -> Multipliers {
        let k = self.n_states() * self.n_actions();
        Multipliers { beta: x.rows(k, self.n_states()).into_owned() }
    }
}

impl ResidualSystem for VoiSystem {
    fn dim(&self) -> usize {
        self.n_states() * (self.n_actions() + 1)
    }

    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        let (n, m) = (self.n_states(), self.n_actions());
        let k = n * m;
        let mut r = DVector::zeros(k + n);
        for s in 0..n {
            let ps = self.prior[s];
            let mut row = 0.0;
            for a in 0..m {
                let i = s * m + a;
                row += x[i];
                r[i] = if self.pinned[i] {
                    x[i] - self.floor
                } else {
                    ps * self.q.values[(s, a)] + ps / theta * ((x[i] / self.marginal[a]).ln() + 1.0) + x[k + s]
                };
            }
            r[k + s] = row - 1.0;
        }
        r
    }

    fn jacobian_x(&self, x: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        let (n, m) = (self.n_states(), self.n_actions());
        let k = n * m;
        let mut j = DMatrix::zeros(k + n, k + n);
        for s in 0..n {
            for a in 0..m {
                let i = s * m + a;
                if self.pinned[i] {
                    j[(i, i)] = 1.0;
                } else {
                    j[(i, i)] = self.prior[s] / (theta * x[i]);
                    j[(i, k + s)] = 1.0;
                }
                j[(k + s, i)] = 1.0;
            }
        }
        j
    }

    fn jacobian_theta(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        let (n, m) = (self.n_states(), self.n_actions());
        DVector::from_fn(n * m + n, |i, _| {
            if i >= n * m || self.pinned[i] {
                0.0
            } else {
                let (s, a) = (i / m, i % m);
                -self.prior[s] / (theta * theta) * ((x[i] / self.marginal[a]).ln() + 1.0)
            }
        })
    }

    fn max_step(&self, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
        let mut t: f64 = 1.0;
        for (i, pinned) in self.pinned.iter().enumerate() {
            if !pinned && dx[i] < 0.0 {
                t = t.min(0.99 * x[i] / -dx[i]);
            }
        }
        t
    }

    fn project(&self, x: &mut DVector<f64>) {
        for (i, pinned) in self.pinned.iter().enumerate() {
            if !pinned {
                x[i] = x[i].max(self.floor);
            }
        }
    }

    /// `J_x` decouples into one arrowhead block per state: eliminate the
    /// free policy entries, solve for the multiplier, back-substitute.
    fn structured_solve(&self, x: &DVector<f64>, theta: f64, b: &DVector<f64>) -> Option<DVector<f64>> {
        let (n, m) = (self.n_states(), self.n_actions());
        let k = n * m;
        let mut y = DVector::zeros(k + n);
        for s in 0..n {
            let ps = self.prior[s];
            let (mut inv_sum, mut weighted, mut fixed) = (0.0, 0.0, 0.0);
            for a in 0..m {
                let i = s * m + a;
                if self.pinned[i] {
                    fixed += b[i];
                } else {
                    let w = theta * x[i] / ps;
                    if !(w.is_finite() && w > 0.0) {
                        return None;
                    }
                    inv_sum += w;
                    weighted += w * b[i];
                }
            }
            if inv_sum <= 0.0 {
                return None;
            }
            let z = (weighted + fixed - b[k + s]) / inv_sum;
            for a in 0..m {
                let i = s * m + a;
                y[i] = if self.pinned[i] { b[i] } else { theta * x[i] / ps * (b[i] - z) };
            }
            y[k + s] = z;
        }
        Some(y)
    }
}

/// A policy consistent with its own marginal at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct Consistent {
    pub rows: GibbsRows,
    pub marginal: ActionMarginal,
    pub iterations: usize,
    pub converged: bool,
}

/// Marginal mass, in units of the floor, below which an action counts as absent.
const DORMANT: f64 = 1e3;

/// Blahut-Arimoto sweeps from `init` with `suppressed` actions held on the
/// floor. The returned rows are the Gibbs rows of the returned marginal.
pub fn reconcile_marginal(
    q: &QTable,
    prior: &StateDistribution,
    theta: f64,
    init: &DVector<f64>,
    suppressed: &[bool],
    opts: &BaOptions,
) -> Result<Consistent> {
    let (n, m) = q.values.shape();
    let restrict = |mut p: DVector<f64>| -> Result<ActionMarginal> {
        for (a, s) in suppressed.iter().enumerate() {
            if *s {
                p[a] = 0.0;
            }
        }
        Ok(ActionMarginal::new(p, opts.floor)?)
    };
    let mut marginal = restrict(init.clone())?;
    let mut prev: Option<DMatrix<f64>> = None;
    for it in 1..=opts.max_iter.max(1) {
        let rows = gibbs_policy(q, marginal.probs(), theta, opts.floor);
        let change = prev.as_ref().map_or(f64::INFINITY, |p| (&rows.pi - p).amax());
        if change < opts.tol || it == opts.max_iter.max(1) {
            return Ok(Consistent { rows, marginal, iterations: it, converged: change < opts.tol });
        }
        let next = DVector::from_fn(m, |a, _| (0..n).map(|s| prior[s] * rows.pi[(s, a)]).sum());
        marginal = restrict(next)?;
        prev = Some(rows.pi);
    }
    unreachable!("loop returns on its last iteration")
}

/// Actions on the floor whose Blahut-Arimoto growth factor
/// `sum_s p(s) exp(-theta Q(s,a)) / Z(s)` exceeds `1 + tol`.
pub fn entering_actions(
    q: &QTable,
    prior: &StateDistribution,
    theta: f64,
    state: &Consistent,
    suppressed: &[bool],
    tol: f64,
) -> Vec<usize> {
    growth_factors(q, prior, theta, state, suppressed)
        .into_iter()
        .enumerate()
        .filter(|(_, g)| *g > 1.0 + tol)
        .map(|(a, _)| a)
        .collect()
}

/// Growth factors of the dormant, unsuppressed actions; zero for the rest.
fn growth_factors(q: &QTable, prior: &StateDistribution, theta: f64, state: &Consistent, suppressed: &[bool]) -> Vec<f64> {
    let floor = state.marginal.floor();
    (0..q.n_actions())
        .map(|a| {
            if suppressed[a] || state.marginal.probs()[a] > DORMANT * floor {
                return 0.0;
            }
            (0..q.n_states()).map(|s| prior[s] * (-theta * q.values[(s, a)] - state.rows.log_z[s]).exp()).sum()
        })
        .collect()
}

/// Diagnostics for one solution on a value-of-information branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiPoint {
    pub branch_id: usize,
    pub step: usize,
    pub theta: f64,
    pub arclen: f64,
    pub residual_norm: f64,
    pub kkt_residual: f64,
    pub mutual_information: f64,
    pub objective_f: f64,
    pub n_state_groups: usize,
    /// True when the point sits exactly on a requested sample value.
    pub sample: bool,
    pub policy: Policy,
    pub marginal: ActionMarginal,
    pub beta: Multipliers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiTraceOptions {
    /// Small starting parameter standing in for the no-information limit.
    pub theta_start: f64,
    pub theta_max: f64,
    /// Parameter values at which the path is landed exactly.
    pub samples: Vec<f64>,
    pub trace: TraceOptions,
    pub max_branches: usize,
    pub ba: BaOptions,
    /// Growth-factor margin for declaring an action as entering.
    pub support_tol: f64,
    /// Marginal mass given to an entering action before re-convergence.
    pub seed_mass: f64,
    pub group_tol: f64,
}

impl Default for VoiTraceOptions {
    fn default() -> Self {
        VoiTraceOptions {
            theta_start: 1e-3,
            theta_max: 10.0,
            samples: Vec::new(),
            trace: TraceOptions { tol: 1e-10, delta_init: 0.05, ..TraceOptions::default() },
            max_branches: 8,
            ba: BaOptions { tol: 1e-13, max_iter: 1_000_000, floor: DEFAULT_FLOOR },
            support_tol: 1e-6,
            seed_mass: 1e-3,
            group_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiBranch {
    pub id: usize,
    pub parent: Option<usize>,
    /// Actions held on the floor along this branch.
    pub suppressed: Vec<bool>,
    pub points: Vec<VoiPoint>,
    pub events: Vec<SingularEvent>,
    pub status: TraceStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoiTrace {
    pub branches: Vec<VoiBranch>,
}

impl VoiTrace {
    /// Lowest-objective point across branches at each sample value.
    pub fn best_samples(&self) -> Vec<VoiPoint> {
        let mut best: Vec<VoiPoint> = Vec::new();
        for p in self.branches.iter().flat_map(|b| &b.points).filter(|p| p.sample) {
            match best.iter_mut().find(|b| b.theta == p.theta) {
                Some(b) if p.objective_f < b.objective_f => *b = p.clone(),
                Some(_) => {}
                None => best.push(p.clone()),
            }
        }
        best.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        best
    }

    /// Best sample at exactly `theta`.
    pub fn best_at(&self, theta: f64) -> Option<VoiPoint> {
        self.best_samples().into_iter().find(|p| p.theta == theta)
    }

    pub fn events(&self) -> impl Iterator<Item = (usize, &SingularEvent)> {
        self.branches.iter().flat_map(|b| b.events.iter().map(move |e| (b.id, e)))
    }
}

#[derive(Debug, Clone)]
struct Seed {
    parent: Option<usize>,
    theta: f64,
    arclen: f64,
    marginal: DVector<f64>,
    suppressed: Vec<bool>,
    objective: f64,
}

struct Context<'a> {
    q: &'a QTable,
    prior: &'a StateDistribution,
    opts: &'a VoiTraceOptions,
}

impl Context<'_> {
    fn describe(&self, id: usize, step: usize, theta: f64, arclen: f64, c: &Consistent, sample: bool) -> Result<VoiPoint> {
        let beta = c.rows.multipliers(self.prior, theta);
        let system = VoiSystem::new(self.q, self.prior, &c.marginal, c.rows.pinned.clone())?;
        let residual_norm = system.residual(&VoiSystem::point(&c.rows, &beta, theta).x, theta).amax();
        let policy = Policy::new(c.rows.pi.clone(), c.marginal.floor())?;
        let th = ExplorationRate::new(theta)?;
        let obj = voi_objective(self.q, &policy, self.prior, &c.marginal, th)?;
        Ok(VoiPoint {
            branch_id: id,
            step,
            theta,
            arclen,
            residual_norm,
            kkt_residual: kkt_residual(self.q, &policy, &beta, self.prior, &c.marginal, th)?,
            mutual_information: mutual_information(&policy, self.prior, &c.marginal)?,
            objective_f: obj.big_f,
            n_state_groups: state_groups(&policy, self.opts.group_tol),
            sample,
            policy,
            marginal: c.marginal.clone(),
            beta,
        })
    }

    fn objective(&self, theta: f64, c: &Consistent) -> Result<f64> {
        let policy = Policy::new(c.rows.pi.clone(), c.marginal.floor())?;
        Ok(voi_objective(self.q, &policy, self.prior, &c.marginal, ExplorationRate::new(theta)?)?.big_f)
    }

    fn reconcile(&self, theta: f64, init: &DVector<f64>, suppressed: &[bool]) -> Result<Consistent> {
        reconcile_marginal(self.q, self.prior, theta, init, suppressed, &self.opts.ba)
    }

    /// Bisects `(lo, hi]` for the first parameter value where a dormant
    /// action starts to grow, given that one grows at `hi` but none at `lo`.
    fn locate_entry(&self, lo: f64, hi: f64, init: &DVector<f64>, suppressed: &[bool]) -> Result<(f64, Consistent)> {
        let tol = self.opts.support_tol;
        let grows = |c: &Consistent, th: f64| {
            growth_factors(self.q, self.prior, th, c, suppressed).iter().any(|g| *g > 1.0 + tol)
        };
        let (mut lo, mut hi) = (lo, hi);
        let mut found = self.reconcile(hi, init, suppressed)?;
        while hi - lo > 1e-10 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            let c = self.reconcile(mid, init, suppressed)?;
            if grows(&c, mid) {
                hi = mid;
                found = c;
            } else {
                lo = mid;
            }
        }
        Ok((hi, found))
    }

    /// Handles support entries at a consistent point: returns the entering
    /// state, the restricted seed, and the event.
    fn split(
        &self,
        theta: f64,
        arclen: f64,
        state: &Consistent,
        suppressed: &[bool],
        parent: usize,
    ) -> Result<Option<(Consistent, Seed, SingularEvent)>> {
        let entering = entering_actions(self.q, self.prior, theta, state, suppressed, self.opts.support_tol);
        if entering.is_empty() {
            return Ok(None);
        }
        let mut seeded = state.marginal.probs().clone();
        for &a in &entering {
            seeded[a] = self.opts.seed_mass;
        }
        let grown = self.reconcile(theta, &seeded, suppressed)?;
        let mut restricted = suppressed.to_vec();
        for &a in &entering {
            restricted[a] = true;
        }
        let seed = Seed {
            parent: Some(parent),
            theta,
            arclen,
            marginal: state.marginal.probs().clone(),
            suppressed: restricted,
            objective: self.objective(theta, state)?,
        };
        let beta = state.rows.multipliers(self.prior, theta);
        let mut location = VoiSystem::point(&state.rows, &beta, theta);
        location.arclen = arclen;
        let event = SingularEvent {
            location,
            kind: PointKind::Bifurcation,
            nullspace_dim: entering.len(),
            smallest_singular_value: 0.0,
            abe_coeffs: None,
            branch_tangents: Vec::new(),
            actions: entering,
            null_right: Vec::new(),
            null_left: Vec::new(),
        };
        Ok(Some((grown, seed, event)))
    }

    fn run(&self, id: usize, seed: &Seed) -> Result<(VoiBranch, Vec<Seed>)> {
        let opts = self.opts;
        let t = &opts.trace;
        let mut branch = VoiBranch {
            id,
            parent: seed.parent,
            suppressed: seed.suppressed.clone(),
            points: Vec::new(),
            events: Vec::new(),
            status: TraceStatus::ThetaMax,
        };
        let mut spawned = Vec::new();
        let mut theta = seed.theta;
        let mut arclen = seed.arclen;
        let mut state = self.reconcile(theta, &seed.marginal, &seed.suppressed)?;
        if let Some((grown, child, event)) = self.split(theta, arclen, &state, &seed.suppressed, id)? {
            state = grown;
            spawned.push(child);
            branch.events.push(event);
        }
        let is_sample = |th: f64| opts.samples.contains(&th);
        branch.points.push(self.describe(id, 0, theta, arclen, &state, is_sample(theta))?);
        let mut targets: Vec<f64> =
            opts.samples.iter().copied().filter(|&s| s > theta && s < opts.theta_max).collect();
        targets.push(opts.theta_max);
        targets.sort_by(f64::total_cmp);
        targets.dedup();
        let mut targets = targets.into_iter().peekable();
        let mut prev: Option<TangentVector> = None;
        let mut delta_mod = t.delta_init;
        while let Some(&target) = targets.peek() {
            if branch.points.len() > t.budget {
                branch.status = TraceStatus::BudgetExhausted;
                break;
            }
            let beta = state.rows.multipliers(self.prior, theta);
            let system = VoiSystem::new(self.q, self.prior, &state.marginal, state.rows.pinned.clone())?;
            let mut cur = VoiSystem::point(&state.rows, &beta, theta);
            cur.arclen = arclen;
            let Ok(mut tangent) = compute_tangent(&system, &cur, prev.as_ref()) else {
                branch.status = TraceStatus::Singular;
                break;
            };
            if tangent.dtheta < 0.0 {
                tangent = tangent.negated();
            }
            let reference = prev.clone().unwrap_or_else(|| tangent.clone());
            let mut step = adaptive_steplength(&tangent, &reference, delta_mod, (t.delta_min, t.delta_max)).abs();
            let outcome = loop {
                let reach = theta + step * tangent.dtheta;
                let land = || {
                    let h = (target - theta) / tangent.dtheta;
                    let mut guess = predictor(&cur, &tangent, h);
                    system.project(&mut guess.x);
                    correct_parameter(&system, &guess, target, t.tol, t.max_newton).map(|c| (c, true))
                };
                let attempt = if reach >= target - 1e-12 {
                    land()
                } else {
                    let mut guess = predictor(&cur, &tangent, step);
                    system.project(&mut guess.x);
                    match correct_pal_weighted(&system, &guess, &tangent, &cur, step, t.tol, t.max_newton, t.arc_weight) {
                        Ok(c) if c.point.theta >= target => land(),
                        other => other.map(|c| (c, false)),
                    }
                };
                match attempt {
                    Ok(ok) => break Some(ok),
                    Err(_) if step > t.delta_min => {
                        step = (step / 2.0).max(t.delta_min);
                        delta_mod = delta_mod.min(step);
                    }
                    Err(_) => break None,
                }
            };
            let Some((corrected, mut landed)) = outcome else {
                branch.status = TraceStatus::Abandoned;
                break;
            };
            if corrected.iterations <= 3 {
                delta_mod = (delta_mod * 1.5).min(t.delta_max);
            }
            let next = corrected.point;
            let mut new_theta = if landed { target } else { next.theta };
            if !(new_theta > theta) {
                branch.status = TraceStatus::Abandoned;
                break;
            }
            let advance = ((&next.x - &cur.x).norm_squared() + (new_theta - theta).powi(2)).sqrt();
            let pi = system.policy_table(&next.x);
            let implied = DVector::from_fn(pi.ncols(), |a, _| (0..pi.nrows()).map(|s| self.prior[s] * pi[(s, a)]).sum());
            let mut reached = self.reconcile(new_theta, &implied, &seed.suppressed)?;
            if !entering_actions(self.q, self.prior, new_theta, &reached, &seed.suppressed, opts.support_tol).is_empty() {
                let (at, located) = self.locate_entry(theta, new_theta, state.marginal.probs(), &seed.suppressed)?;
                if at < new_theta {
                    landed = false;
                }
                new_theta = at;
                reached = located;
            }
            arclen += advance * (new_theta - theta) / (if landed { target } else { next.theta } - theta).max(f64::MIN_POSITIVE);
            theta = new_theta;
            state = reached;
            if let Some((grown, child, event)) = self.split(theta, arclen, &state, &seed.suppressed, id)? {
                state = grown;
                spawned.push(child);
                branch.events.push(event);
            }
            if landed {
                targets.next();
            }
            let step_index = branch.points.len();
            branch.points.push(self.describe(id, step_index, theta, arclen, &state, landed && is_sample(theta))?);
            prev = Some(tangent);
        }
        Ok((branch, spawned))
    }
}

/// Traces the value-of-information solution set from the no-information
/// limit, splitting at support entries and keeping at most
/// `max_branches` branches, preferring lower objective at the split.
pub fn trace_voi(q: &QTable, prior: &StateDistribution, opts: &VoiTraceOptions) -> Result<VoiTrace> {
    if !(opts.theta_start > 0.0 && opts.theta_start < opts.theta_max) {
        return Err(ContinuationError::Invalid(format!(
            "need 0 < theta_start ({}) < theta_max ({})",
            opts.theta_start, opts.theta_max
        )));
    }
    let ctx = Context { q, prior, opts };
    let start = ActionMarginal::no_information_optimum(q, prior, opts.ba.floor)?;
    let root = Seed {
        parent: None,
        theta: opts.theta_start,
        arclen: 0.0,
        marginal: start.probs().clone(),
        suppressed: vec![false; q.n_actions()],
        objective: 0.0,
    };
    let mut branches: Vec<VoiBranch> = Vec::new();
    let mut wave = vec![root];
    while !wave.is_empty() {
        let first_id = branches.len();
        let results: Vec<Result<(VoiBranch, Vec<Seed>)>> =
            wave.par_iter().enumerate().map(|(i, seed)| ctx.run(first_id + i, seed)).collect();
        let mut next = Vec::new();
        for r in results {
            let (branch, seeds) = r?;
            branches.push(branch);
            next.extend(seeds);
        }
        next.sort_by(|a, b| a.objective.total_cmp(&b.objective).then(a.theta.total_cmp(&b.theta)));
        next.truncate(opts.max_branches.saturating_sub(branches.len()));
        wave = next;
    }
    Ok(VoiTrace { branches })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiStepOptions {
    pub delta_mod: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub theta_max: f64,
    pub tol: f64,
    pub max_newton: usize,
    pub arc_weight: f64,
    /// Sweep budget for bringing the marginal back into agreement.
    pub ba: BaOptions,
    pub support_tol: f64,
    pub seed_mass: f64,
    pub group_tol: f64,
}

impl Default for VoiStepOptions {
    fn default() -> Self {
        VoiStepOptions {
            delta_mod: 0.05,
            delta_min: 1e-6,
            delta_max: 0.5,
            theta_max: 50.0,
            tol: 1e-8,
            max_newton: 12,
            arc_weight: 0.5,
            ba: BaOptions { tol: 1e-10, max_iter: 200, floor: DEFAULT_FLOOR },
            support_tol: 1e-6,
            seed_mass: 1e-3,
            group_tol: 1e-4,
        }
    }
}

/// Outcome of one incremental continuation step.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiStep {
    pub policy: Policy,
    pub marginal: ActionMarginal,
    pub beta: Multipliers,
    pub theta: f64,
    pub mutual_information: f64,
    pub objective_f: f64,
    pub kkt_residual: f64,
    pub n_state_groups: usize,
    pub event: Option<SingularEvent>,
}

/// Continuation state carried across learning episodes. Each call to
/// [`VoiContinuation::advance`] re-solves at the current parameter for the
/// latest cost table and then takes one pseudo-arc-length step.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiContinuation {
    pub theta: f64,
    pub arclen: f64,
    marginal: DVector<f64>,
    previous: Option<TangentVector>,
    pub opts: VoiStepOptions,
}

impl VoiContinuation {
    pub fn new(theta: f64, n_actions: usize, opts: VoiStepOptions) -> Result<Self> {
        ExplorationRate::new(theta)?;
        if n_actions == 0 {
            return Err(ContinuationError::Invalid("need at least one action".into()));
        }
        Ok(VoiContinuation {
            theta,
            arclen: 0.0,
            marginal: DVector::from_element(n_actions, 1.0 / n_actions as f64),
            previous: None,
            opts,
        })
    }

    pub fn marginal(&self) -> &DVector<f64> {
        &self.marginal
    }

    /// Consistent solution at `theta`, switching to the entering branch when
    /// an action on the floor would grow and that lowers the objective.
    fn settle(
        &self,
        q: &QTable,
        prior: &StateDistribution,
        theta: f64,
        init: &DVector<f64>,
    ) -> Result<(Consistent, Option<SingularEvent>)> {
        let none = vec![false; q.n_actions()];
        let state = reconcile_marginal(q, prior, theta, init, &none, &self.opts.ba)?;
        let entering = entering_actions(q, prior, theta, &state, &none, self.opts.support_tol);
        if entering.is_empty() {
            return Ok((state, None));
        }
        let mut seeded = state.marginal.probs().clone();
        for &a in &entering {
            seeded[a] = self.opts.seed_mass;
        }
        let grown = reconcile_marginal(q, prior, theta, &seeded, &none, &self.opts.ba)?;
        let f = |c: &Consistent| -> Result<f64> {
            let policy = Policy::new(c.rows.pi.clone(), c.marginal.floor())?;
            Ok(voi_objective(q, &policy, prior, &c.marginal, ExplorationRate::new(theta)?)?.big_f)
        };
        if f(&grown)? > f(&state)? {
            return Ok((state, None));
        }
        let beta = state.rows.multipliers(prior, theta);
        let mut location = VoiSystem::point(&state.rows, &beta, theta);
        location.arclen = self.arclen;
        let event = SingularEvent {
            location,
            kind: PointKind::Bifurcation,
            nullspace_dim: entering.len(),
            smallest_singular_value: 0.0,
            abe_coeffs: None,
            branch_tangents: Vec::new(),
            actions: entering,
            null_right: Vec::new(),
            null_left: Vec::new(),
        };
        Ok((grown, Some(event)))
    }

    fn report(&self, q: &QTable, prior: &StateDistribution, c: &Consistent, event: Option<SingularEvent>) -> Result<VoiStep> {
        let th = ExplorationRate::new(self.theta)?;
        let policy = Policy::new(c.rows.pi.clone(), c.marginal.floor())?;
        let beta = c.rows.multipliers(prior, self.theta);
        let obj = voi_objective(q, &policy, prior, &c.marginal, th)?;
        Ok(VoiStep {
            mutual_information: obj.mutual_information,
            objective_f: obj.big_f,
            kkt_residual: kkt_residual(q, &policy, &beta, prior, &c.marginal, th)?,
            n_state_groups: state_groups(&policy, self.opts.group_tol),
            theta: self.theta,
            marginal: c.marginal.clone(),
            policy,
            beta,
            event,
        })
    }

    /// Solution at the current parameter without stepping.
    pub fn solve(&mut self, q: &QTable, prior: &StateDistribution) -> Result<VoiStep> {
        let (state, event) = self.settle(q, prior, self.theta, &self.marginal.clone())?;
        self.marginal = state.marginal.probs().clone();
        self.report(q, prior, &state, event)
    }

    /// Re-solves at the current parameter and takes one step toward `theta_max`.
    pub fn advance(&mut self, q: &QTable, prior: &StateDistribution) -> Result<VoiStep> {
        let (state, first_event) = self.settle(q, prior, self.theta, &self.marginal.clone())?;
        self.marginal = state.marginal.probs().clone();
        if self.theta >= self.opts.theta_max {
            return self.report(q, prior, &state, first_event);
        }
        let o = &self.opts;
        let beta = state.rows.multipliers(prior, self.theta);
        let system = VoiSystem::new(q, prior, &state.marginal, state.rows.pinned.clone())?;
        let mut cur = VoiSystem::point(&state.rows, &beta, self.theta);
        cur.arclen = self.arclen;
        let mut tangent = compute_tangent(&system, &cur, self.previous.as_ref())?;
        if tangent.dtheta < 0.0 {
            tangent = tangent.negated();
        }
        let reference = self.previous.clone().unwrap_or_else(|| tangent.clone());
        let mut step = adaptive_steplength(&tangent, &reference, o.delta_mod, (o.delta_min, o.delta_max)).abs();
        let corrected = loop {
            let landing = self.theta + step * tangent.dtheta >= o.theta_max;
            let attempt = if landing {
                let mut guess = predictor(&cur, &tangent, (o.theta_max - self.theta) / tangent.dtheta);
                system.project(&mut guess.x);
                correct_parameter(&system, &guess, o.theta_max, o.tol, o.max_newton)
            } else {
                let mut guess = predictor(&cur, &tangent, step);
                system.project(&mut guess.x);
                correct_pal_weighted(&system, &guess, &tangent, &cur, step, o.tol, o.max_newton, o.arc_weight)
            };
            match attempt {
                Ok(c) => break Some(c),
                Err(_) if step > o.delta_min => step = (step / 2.0).max(o.delta_min),
                Err(_) => break None,
            }
        };
        let Some(corrected) = corrected else {
            return self.report(q, prior, &state, first_event);
        };
        let next = corrected.point;
        let new_theta = next.theta.min(o.theta_max);
        if new_theta <= self.theta {
            return self.report(q, prior, &state, first_event);
        }
        let pi = system.policy_table(&next.x);
        let implied = DVector::from_fn(pi.ncols(), |a, _| (0..pi.nrows()).map(|s| prior[s] * pi[(s, a)]).sum());
        self.arclen += ((&next.x - &cur.x).norm_squared() + (new_theta - self.theta).powi(2)).sqrt();
        self.theta = new_theta;
        self.previous = Some(tangent);
        let (state, event) = self.settle(q, prior, self.theta, &implied)?;
        self.marginal = state.marginal.probs().clone();
        self.report(q, prior, &state, event.or(first_event))
    }
}

use serde::{Deserialize, Serialize};

use crate::linalg::{det_sign, sorted_svd};
use crate::singular::classify_point_with;
use crate::{
    abe_coefficients, adaptive_steplength, compute_tangent, correct_pal_weighted, correct_parameter, enumerate_branches,
    predictor, ContinuationPoint, PointKind, ResidualSystem, SingularEvent, TangentVector,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub theta_min: f64,
    pub theta_max: f64,
    /// Accepted-point residual tolerance.
    pub tol: f64,
    pub max_newton: usize,
    /// Maximum number of accepted steps.
    pub budget: usize,
    pub delta_init: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Weight of the state part of the arc-length constraint.
    pub arc_weight: f64,
    pub sigma_rel: f64,
    pub range_tol: f64,
    pub abe_epsilon: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            theta_min: f64::NEG_INFINITY,
            theta_max: f64::INFINITY,
            tol: 1e-8,
            max_newton: 12,
            budget: 10_000,
            delta_init: 0.1,
            delta_min: 1e-6,
            delta_max: 0.5,
            arc_weight: 0.5,
            sigma_rel: crate::singular::SIGMA_REL_TOL,
            range_tol: crate::singular::RANGE_TOL,
            abe_epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    ThetaMax,
    ThetaMin,
    Stopped,
    BudgetExhausted,
    /// The corrector kept failing down to the minimum step.
    Abandoned,
    UndeterminedBranching,
    Singular,
}

/// Start of a branch leaving a bifurcation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSeed {
    pub point: ContinuationPoint,
    pub tangent: TangentVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceResult {
    pub path: Vec<ContinuationPoint>,
    pub tangents: Vec<TangentVector>,
    pub events: Vec<SingularEvent>,
    pub spawned: Vec<BranchSeed>,
    pub status: TraceStatus,
}

/// Pseudo-arc-length tracing until a theta bound or the budget is reached.
pub fn trace_branch<S: ResidualSystem + ?Sized>(
    system: &S,
    start: &ContinuationPoint,
    initial: Option<&TangentVector>,
    opts: &TraceOptions,
) -> TraceResult {
    trace_branch_with(system, start, initial, opts, |_| false)
}

/// Like [`trace_branch`], also stopping after the first accepted point for
/// which `stop` returns true.
pub fn trace_branch_with<S: ResidualSystem + ?Sized>(
    system: &S,
    start: &ContinuationPoint,
    initial: Option<&TangentVector>,
    opts: &TraceOptions,
    stop: impl Fn(&ContinuationPoint) -> bool,
) -> TraceResult {
    let mut out = TraceResult {
        path: vec![start.clone().evaluated(system)],
        tangents: Vec::new(),
        events: Vec::new(),
        spawned: Vec::new(),
        status: TraceStatus::BudgetExhausted,
    };
    let mut forced = initial.cloned();
    let mut prev: Option<TangentVector> = initial.cloned();
    let mut delta_mod = opts.delta_init;
    let mut det_prev = det_sign(&system.jacobian_x(&start.x, start.theta));
    while out.path.len() <= opts.budget {
        let cur = out.path.last().unwrap().clone();
        let tangent = match forced.take() {
            Some(t) => t,
            None => match compute_tangent(system, &cur, prev.as_ref()) {
                Ok(t) => t,
                Err(_) => match continue_through(system, &cur, prev.as_ref(), opts, &mut out) {
                    Some(t) => t,
                    None => break,
                },
            },
        };
        let reference = prev.clone().unwrap_or_else(|| tangent.clone());
        let mut step = adaptive_steplength(&tangent, &reference, delta_mod, (opts.delta_min, opts.delta_max)).abs();
        let accepted = loop {
            let mut guess = predictor(&cur, &tangent, step);
            system.project(&mut guess.x);
            match correct_pal_weighted(system, &guess, &tangent, &cur, step, opts.tol, opts.max_newton, opts.arc_weight)
            {
                Ok(c) => break Some(c),
                Err(_) if step > opts.delta_min => {
                    step = (step / 2.0).max(opts.delta_min);
                    delta_mod = delta_mod.min(step);
                }
                Err(_) => break None,
            }
        };
        let Some(correction) = accepted else {
            out.status = TraceStatus::Abandoned;
            break;
        };
        if correction.iterations <= 3 {
            delta_mod = (delta_mod * 1.5).min(opts.delta_max);
        }
        let mut next = correction.point;
        let det_next = det_sign(&system.jacobian_x(&next.x, next.theta));
        if det_prev != 0.0 && det_next != 0.0 && det_next != det_prev {
            if let Some(event) = locate_event(system, &cur, &tangent, step, opts) {
                record_event(system, event, &tangent, opts, &mut out);
            }
        }
        det_prev = det_next;
        out.tangents.push(tangent.clone());
        prev = Some(tangent);
        let bound = if next.theta > opts.theta_max {
            Some((opts.theta_max, TraceStatus::ThetaMax))
        } else if next.theta < opts.theta_min {
            Some((opts.theta_min, TraceStatus::ThetaMin))
        } else {
            None
        };
        if let Some((edge, status)) = bound {
            if let Some(p) = land_on(system, &cur, &next, edge, opts) {
                next = p;
            }
            out.path.push(next);
            out.status = status;
            break;
        }
        let done = stop(&next);
        out.path.push(next);
        if done {
            out.status = TraceStatus::Stopped;
            break;
        }
    }
    out
}

/// Replaces a step that overshot `edge` with the solution at exactly `edge`.
fn land_on<S: ResidualSystem + ?Sized>(
    system: &S,
    cur: &ContinuationPoint,
    next: &ContinuationPoint,
    edge: f64,
    opts: &TraceOptions,
) -> Option<ContinuationPoint> {
    let frac = (edge - cur.theta) / (next.theta - cur.theta);
    let mut guess = ContinuationPoint::new(&cur.x + (&next.x - &cur.x) * frac, edge);
    system.project(&mut guess.x);
    let c = correct_parameter(system, &guess, edge, opts.tol, opts.max_newton).ok()?;
    let mut p = c.point;
    p.arclen = cur.arclen + ((&p.x - &cur.x).norm_squared() + (edge - cur.theta).powi(2)).sqrt();
    Some(p)
}

/// Signed smallest singular value of `J_x`, continuous across simple zeros.
fn test_function<S: ResidualSystem + ?Sized>(system: &S, p: &ContinuationPoint) -> f64 {
    let jx = system.jacobian_x(&p.x, p.theta);
    let sign = det_sign(&jx);
    let sigma = sorted_svd(&jx).smallest();
    if sign == 0.0 {
        0.0
    } else {
        sign * sigma
    }
}

/// Illinois root search along the step for the singular point bracketed by
/// a determinant sign change.
fn locate_event<S: ResidualSystem + ?Sized>(
    system: &S,
    anchor: &ContinuationPoint,
    tangent: &TangentVector,
    step: f64,
    opts: &TraceOptions,
) -> Option<SingularEvent> {
    let point_at = |s: f64| -> Option<ContinuationPoint> {
        if s == 0.0 {
            return Some(anchor.clone());
        }
        let mut guess = predictor(anchor, tangent, s);
        system.project(&mut guess.x);
        correct_pal_weighted(system, &guess, tangent, anchor, s, opts.tol * 1e-2, opts.max_newton * 2, opts.arc_weight)
            .ok()
            .map(|c| c.point)
    };
    let (mut a, mut b) = (0.0, step);
    let mut pa = anchor.clone();
    let mut pb = point_at(b)?;
    let (mut fa, mut fb) = (test_function(system, &pa), test_function(system, &pb));
    let mut side = 0;
    for _ in 0..80 {
        let s = (a * fb - b * fa) / (fb - fa);
        let s = if s.is_finite() && s > a.min(b) && s < a.max(b) { s } else { 0.5 * (a + b) };
        let ps = point_at(s)?;
        let fs = test_function(system, &ps);
        let cutoff = opts.sigma_rel * sorted_svd(&system.jacobian_x(&ps.x, ps.theta)).largest().max(1.0);
        if fs.abs() <= cutoff || (b - a).abs() <= 1e-14 * step.abs().max(1.0) {
            return Some(classify_point_with(system, &ps, Some(tangent), opts.sigma_rel, opts.range_tol));
        }
        if fs.signum() == fa.signum() {
            a = s;
            pa = ps;
            fa = fs;
            if side == -1 {
                fb /= 2.0;
            }
            side = -1;
        } else {
            b = s;
            pb = ps;
            fb = fs;
            if side == 1 {
                fa /= 2.0;
            }
            side = 1;
        }
    }
    let best = if fa.abs() < fb.abs() { pa } else { pb };
    Some(classify_point_with(system, &best, Some(tangent), opts.sigma_rel, opts.range_tol))
}

/// Fills in bifurcation data and records the event; spawned tangents are all
/// enumerated directions except the one continuing `incoming`.
fn record_event<S: ResidualSystem + ?Sized>(
    system: &S,
    mut event: SingularEvent,
    incoming: &TangentVector,
    opts: &TraceOptions,
    out: &mut TraceResult,
) -> Option<TangentVector> {
    let mut continuation = None;
    if event.kind == PointKind::Bifurcation {
        if let Ok(abe) = abe_coefficients(system, &event, opts.abe_epsilon) {
            event.abe_coeffs = Some(abe);
            if let Ok(tangents) = enumerate_branches(&event, Some(incoming)) {
                let own = tangents
                    .iter()
                    .enumerate()
                    .max_by(|(_, a), (_, b)| a.dot(incoming).abs().total_cmp(&b.dot(incoming).abs()))
                    .map(|(i, _)| i);
                for (i, t) in tangents.iter().enumerate() {
                    if Some(i) == own {
                        let oriented = if t.dot(incoming) < 0.0 { t.negated() } else { t.clone() };
                        continuation = Some(oriented);
                    } else {
                        out.spawned.push(BranchSeed { point: event.location.clone(), tangent: t.clone() });
                    }
                }
                event.branch_tangents = tangents;
            }
        }
    }
    out.events.push(event);
    continuation
}

/// Handles a point where the tangent could not be computed: classifies it,
/// records the event, and returns the tangent continuing the current branch.
fn continue_through<S: ResidualSystem + ?Sized>(
    system: &S,
    cur: &ContinuationPoint,
    prev: Option<&TangentVector>,
    opts: &TraceOptions,
    out: &mut TraceResult,
) -> Option<TangentVector> {
    let event = classify_point_with(system, cur, prev, opts.sigma_rel, opts.range_tol);
    let kind = event.kind;
    let fold_tangent = event.branch_tangents.first().cloned();
    let Some(incoming) = prev else {
        out.events.push(event);
        out.status = TraceStatus::Singular;
        return None;
    };
    let continuation = record_event(system, event, incoming, opts, out);
    match kind {
        PointKind::Fold => fold_tangent,
        PointKind::Bifurcation if continuation.is_some() => continuation,
        PointKind::Bifurcation => {
            out.status = TraceStatus::UndeterminedBranching;
            None
        }
        PointKind::Regular => {
            out.status = TraceStatus::Singular;
            None
        }
    }
}

use nalgebra::{DMatrix, DVector};

use crate::linalg::{lu_solve, wide_nullspace};
use crate::{ContinuationError, ContinuationPoint, ResidualSystem, Result, TangentVector};

/// Outcome of a Newton corrector run.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub point: ContinuationPoint,
    pub iterations: usize,
    /// Residual sup norm before each iteration and at the end.
    pub residuals: Vec<f64>,
}

/// Unit tangent of the solution curve at `point`.
///
/// Solves `J_x dx = -J_theta` with `dtheta = 1`; when `J_x` is singular, falls
/// back to the bordered system with the previous tangent and then to the
/// nullspace of `[J_x, J_theta]`. The result is oriented along `previous`.
pub fn compute_tangent<S: ResidualSystem + ?Sized>(
    system: &S,
    point: &ContinuationPoint,
    previous: Option<&TangentVector>,
) -> Result<TangentVector> {
    let jt = system.jacobian_theta(&point.x, point.theta);
    if let Some(dx) = system.structured_solve(&point.x, point.theta, &(-&jt)) {
        return Ok(orient(TangentVector::normalized(dx, 1.0), previous));
    }
    let jx = system.jacobian_x(&point.x, point.theta);
    let tangent = if let Some(dx) = lu_solve(&jx, &(-&jt)) {
        TangentVector::normalized(dx, 1.0)
    } else if let Some(t) = previous.and_then(|p| bordered_tangent(&jx, &jt, p)) {
        t
    } else {
        let d = jx.nrows();
        let mut wide = DMatrix::zeros(d, d + 1);
        wide.view_mut((0, 0), (d, d)).copy_from(&jx);
        wide.set_column(d, &jt);
        let null = wide_nullspace(&wide, 1e-10);
        if null.len() != 1 {
            return Err(ContinuationError::Singular(format!(
                "tangent undetermined: [J_x, J_theta] has a {}-dimensional nullspace",
                null.len()
            )));
        }
        let v = &null[0];
        TangentVector::normalized(v.rows(0, d).into_owned(), v[d])
    };
    Ok(orient(tangent, previous))
}

fn bordered_tangent(jx: &DMatrix<f64>, jt: &DVector<f64>, prev: &TangentVector) -> Option<TangentVector> {
    let d = jx.nrows();
    let a = bordered_operator(jx, jt, &prev.dx, prev.dtheta);
    let mut rhs = DVector::zeros(d + 1);
    rhs[d] = 1.0;
    let sol = lu_solve(&a, &rhs)?;
    Some(TangentVector::normalized(sol.rows(0, d).into_owned(), sol[d]))
}

fn orient(t: TangentVector, previous: Option<&TangentVector>) -> TangentVector {
    let flip = match previous {
        Some(p) => t.dot(p) < 0.0,
        None => {
            if t.dtheta != 0.0 {
                t.dtheta < 0.0
            } else {
                t.dx.iter().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)
            }
        }
    };
    if flip {
        t.negated()
    } else {
        t
    }
}

/// The `(d+1)`-square matrix `[J_x, J_theta; row_x^T, row_theta]`.
pub fn bordered_operator(jx: &DMatrix<f64>, jt: &DVector<f64>, row_x: &DVector<f64>, row_theta: f64) -> DMatrix<f64> {
    let d = jx.nrows();
    let mut a = DMatrix::zeros(d + 1, d + 1);
    a.view_mut((0, 0), (d, d)).copy_from(jx);
    a.view_mut((0, d), (d, 1)).copy_from(jt);
    a.view_mut((d, 0), (1, d)).copy_from(&row_x.transpose());
    a[(d, d)] = row_theta;
    a
}

/// Euler predictor `point + delta * tangent`.
pub fn predictor(point: &ContinuationPoint, tangent: &TangentVector, delta: f64) -> ContinuationPoint {
    ContinuationPoint {
        x: &point.x + &tangent.dx * delta,
        theta: point.theta + tangent.dtheta * delta,
        arclen: point.arclen + delta.abs(),
        residual_norm: if delta == 0.0 { point.residual_norm } else { f64::INFINITY },
    }
}

/// Newton on `x` with `theta` fixed.
pub fn correct_parameter<S: ResidualSystem + ?Sized>(
    system: &S,
    guess: &ContinuationPoint,
    theta_fixed: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Correction> {
    let mut x = guess.x.clone();
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let r = system.residual(&x, theta_fixed);
        let norm = r.amax();
        residuals.push(norm);
        if !norm.is_finite() {
            return Err(ContinuationError::NonConvergence { iterations: it, residual: norm });
        }
        if norm <= tol {
            let point = ContinuationPoint { x, theta: theta_fixed, arclen: guess.arclen, residual_norm: norm };
            return Ok(Correction { point, iterations: it, residuals });
        }
        if it == max_iter {
            break;
        }
        let rhs = -r;
        let dx = system
            .structured_solve(&x, theta_fixed, &rhs)
            .or_else(|| lu_solve(&system.jacobian_x(&x, theta_fixed), &rhs))
            .ok_or(ContinuationError::FoldStall { iteration: it, residual: norm })?;
        let t = system.max_step(&x, &dx).min(1.0);
        x += dx * t;
    }
    Err(ContinuationError::NonConvergence { iterations: max_iter, residual: *residuals.last().unwrap() })
}

/// Pseudo-arc-length corrector with the Euclidean constraint row (weight 1/2).
pub fn correct_pal<S: ResidualSystem + ?Sized>(
    system: &S,
    guess: &ContinuationPoint,
    tangent: &TangentVector,
    anchor: &ContinuationPoint,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Correction> {
    correct_pal_weighted(system, guess, tangent, anchor, delta, tol, max_iter, 0.5)
}

/// Newton on `(x, theta)` for `G = 0` and
/// `2 [w dx^T (x - x_a) + (1 - w) dtheta (theta - theta_a)] = delta`.
#[allow(clippy::too_many_arguments)]
pub fn correct_pal_weighted<S: ResidualSystem + ?Sized>(
    system: &S,
    guess: &ContinuationPoint,
    tangent: &TangentVector,
    anchor: &ContinuationPoint,
    delta: f64,
    tol: f64,
    max_iter: usize,
    weight: f64,
) -> Result<Correction> {
    let d = system.dim();
    let row_x = &tangent.dx * (2.0 * weight);
    let row_t = 2.0 * (1.0 - weight) * tangent.dtheta;
    let mut x = guess.x.clone();
    let mut theta = guess.theta;
    let mut residuals = Vec::new();
    for it in 0..=max_iter {
        let g = system.residual(&x, theta);
        let c = row_x.dot(&(&x - &anchor.x)) + row_t * (theta - anchor.theta) - delta;
        let norm = g.amax();
        residuals.push(norm.max(c.abs()));
        if !norm.is_finite() || !c.is_finite() {
            return Err(ContinuationError::StepRejected { iterations: it, residual: f64::INFINITY });
        }
        if norm <= tol && c.abs() <= tol {
            let point = ContinuationPoint { x, theta, arclen: anchor.arclen + delta.abs(), residual_norm: norm };
            return Ok(Correction { point, iterations: it, residuals });
        }
        if it == max_iter {
            break;
        }
        let jt = system.jacobian_theta(&x, theta);
        let (dx, dtheta) = match block_bordered_step(system, &x, theta, &jt, &g, c, &row_x, row_t) {
            Some(step) => step,
            None => {
                let jx = system.jacobian_x(&x, theta);
                let a = bordered_operator(&jx, &jt, &row_x, row_t);
                let mut rhs = DVector::zeros(d + 1);
                rhs.rows_mut(0, d).copy_from(&(-&g));
                rhs[d] = -c;
                let step = lu_solve(&a, &rhs).ok_or_else(|| {
                    ContinuationError::Singular(format!("bordered operator singular at theta = {theta}"))
                })?;
                (step.rows(0, d).into_owned(), step[d])
            }
        };
        let t = system.max_step(&x, &dx).min(1.0);
        x += dx * t;
        theta += dtheta * t;
    }
    Err(ContinuationError::StepRejected { iterations: max_iter, residual: *residuals.last().unwrap() })
}

/// Newton step for the bordered system by block elimination through the
/// structured solve. Gives up when the Schur complement is tiny.
#[allow(clippy::too_many_arguments)]
fn block_bordered_step<S: ResidualSystem + ?Sized>(
    system: &S,
    x: &DVector<f64>,
    theta: f64,
    jt: &DVector<f64>,
    g: &DVector<f64>,
    c: f64,
    row_x: &DVector<f64>,
    row_t: f64,
) -> Option<(DVector<f64>, f64)> {
    let a = system.structured_solve(x, theta, &(-g))?;
    let b = system.structured_solve(x, theta, jt)?;
    let schur = row_t - row_x.dot(&b);
    if schur.abs() <= 1e-12 * (row_t.abs() + row_x.norm() * b.norm()) {
        return None;
    }
    let dtheta = (-c - row_x.dot(&a)) / schur;
    Some((a - b * dtheta, dtheta))
}

/// Signed step: `delta_mod / sqrt(1 + |dx|^2)` clamped to `bounds`, with the
/// sign of the cosine between consecutive tangents.
pub fn adaptive_steplength(
    current: &TangentVector,
    previous: &TangentVector,
    delta_mod: f64,
    bounds: (f64, f64),
) -> f64 {
    let magnitude = (delta_mod / (1.0 + current.dx.norm_squared()).sqrt()).clamp(bounds.0, bounds.1);
    if current.dot(previous) >= 0.0 {
        magnitude
    } else {
        -magnitude
    }
}

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::linalg::{sorted_svd, wide_nullspace};
use crate::{ContinuationError, ContinuationPoint, PointKind, ResidualSystem, Result, SingularEvent, TangentVector};

/// Coefficient tables of the algebraic bifurcation equations
/// `sum_jp w[i][j][p] xi_j xi_p + 2 sum_j w[i][j] xi_j xi_0 + w[i] xi_0^2 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbeTables {
    pub omega_i: Vec<f64>,
    pub omega_ij: Vec<Vec<f64>>,
    pub omega_ijp: Vec<Vec<Vec<f64>>>,
}

impl AbeTables {
    fn max_abs(&self) -> f64 {
        self.flat().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.omega_i
            .iter()
            .copied()
            .chain(self.omega_ij.iter().flatten().copied())
            .chain(self.omega_ijp.iter().flatten().flatten().copied())
    }

    fn gap(&self, other: &AbeTables) -> f64 {
        self.flat().zip(other.flat()).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Disagreement between the estimates at `epsilon` and `epsilon / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbeInstability {
    pub half_step: AbeTables,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbeCoefficients {
    pub epsilon: f64,
    pub tables: AbeTables,
    /// `phi_0 = -pinv(J_x) J_theta`, the particular part of every branch tangent.
    pub phi0: DVector<f64>,
    pub instability: Option<AbeInstability>,
}

/// Relative singular-value threshold, applied to `max(sigma_max, 1)`.
pub const SIGMA_REL_TOL: f64 = 1e-8;
/// Least-squares residual above which `J_theta` is outside the range of `J_x`.
pub const RANGE_TOL: f64 = 1e-6;

/// Classifies a converged point from the singular values of `J_x`.
pub fn classify_point<S: ResidualSystem + ?Sized>(
    system: &S,
    point: &ContinuationPoint,
    previous: Option<&TangentVector>,
) -> SingularEvent {
    classify_point_with(system, point, previous, SIGMA_REL_TOL, RANGE_TOL)
}

pub(crate) fn classify_point_with<S: ResidualSystem + ?Sized>(
    system: &S,
    point: &ContinuationPoint,
    previous: Option<&TangentVector>,
    sigma_rel: f64,
    range_tol: f64,
) -> SingularEvent {
    let jx = system.jacobian_x(&point.x, point.theta);
    let jt = system.jacobian_theta(&point.x, point.theta);
    let svd = sorted_svd(&jx);
    let cutoff = sigma_rel * svd.largest().max(1.0);
    let null: Vec<usize> = (0..svd.sigma.len()).filter(|&k| svd.sigma[k] <= cutoff).collect();
    let mut event = SingularEvent {
        location: point.clone(),
        kind: PointKind::Regular,
        nullspace_dim: null.len(),
        smallest_singular_value: svd.smallest(),
        abe_coeffs: None,
        branch_tangents: Vec::new(),
        actions: Vec::new(),
        null_right: null.iter().map(|&k| svd.right[k].clone()).collect(),
        null_left: null.iter().map(|&k| svd.left[k].clone()).collect(),
    };
    if null.is_empty() {
        return event;
    }
    let y = svd.pinv_solve(&(-&jt), cutoff);
    let miss = (&jx * &y + &jt).norm();
    if miss > range_tol {
        event.kind = PointKind::Fold;
        let d = jx.nrows();
        let mut wide = DMatrix::zeros(d, d + 1);
        wide.view_mut((0, 0), (d, d)).copy_from(&jx);
        wide.set_column(d, &jt);
        if let [v] = wide_nullspace(&wide, sigma_rel).as_slice() {
            let t = TangentVector::normalized(v.rows(0, d).into_owned(), v[d]);
            let flip = previous.is_some_and(|p| t.dot(p) < 0.0);
            event.branch_tangents.push(if flip { t.negated() } else { t });
        }
    } else {
        event.kind = PointKind::Bifurcation;
    }
    event
}

struct Derivatives<'a, S: ?Sized> {
    system: &'a S,
    x: &'a DVector<f64>,
    theta: f64,
    eps: f64,
}

impl<S: ResidualSystem + ?Sized> Derivatives<'_, S> {
    /// `G_xx[u, v]` from central differences of `J_x` along `u`.
    fn g_xx(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let up = self.system.jacobian_x(&(self.x + u * self.eps), self.theta);
        let dn = self.system.jacobian_x(&(self.x - u * self.eps), self.theta);
        (up - dn) * v / (2.0 * self.eps)
    }

    fn g_xtheta(&self, v: &DVector<f64>) -> DVector<f64> {
        let up = self.system.jacobian_x(self.x, self.theta + self.eps);
        let dn = self.system.jacobian_x(self.x, self.theta - self.eps);
        (up - dn) * v / (2.0 * self.eps)
    }

    fn g_thetatheta(&self) -> DVector<f64> {
        let up = self.system.jacobian_theta(self.x, self.theta + self.eps);
        let dn = self.system.jacobian_theta(self.x, self.theta - self.eps);
        (up - dn) / (2.0 * self.eps)
    }

    fn tables(&self, phi: &[DVector<f64>], psi: &[DVector<f64>], phi0: &DVector<f64>) -> AbeTables {
        let k = phi.len();
        let base = self.g_xx(phi0, phi0) + self.g_xtheta(phi0) * 2.0 + self.g_thetatheta();
        let mixed: Vec<DVector<f64>> = phi.iter().map(|pj| self.g_xx(phi0, pj) + self.g_xtheta(pj)).collect();
        let quad: Vec<Vec<DVector<f64>>> =
            phi.iter().map(|pj| phi.iter().map(|pp| self.g_xx(pj, pp)).collect()).collect();
        AbeTables {
            omega_i: psi.iter().map(|ps| ps.dot(&base)).collect(),
            omega_ij: psi.iter().map(|ps| mixed.iter().map(|m| ps.dot(m)).collect()).collect(),
            omega_ijp: psi
                .iter()
                .map(|ps| (0..k).map(|j| (0..k).map(|p| ps.dot(&quad[j][p])).collect()).collect())
                .collect(),
        }
    }
}

/// Finite-difference coefficients of the algebraic bifurcation equations at
/// a bifurcation event, with a stability check against `epsilon / 2`.
pub fn abe_coefficients<S: ResidualSystem + ?Sized>(
    system: &S,
    event: &SingularEvent,
    epsilon: f64,
) -> Result<AbeCoefficients> {
    if event.kind != PointKind::Bifurcation {
        return Err(ContinuationError::Invalid(format!("event is {:?}, not a bifurcation", event.kind)));
    }
    if !(epsilon > 0.0) {
        return Err(ContinuationError::Invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let p = &event.location;
    let jx = system.jacobian_x(&p.x, p.theta);
    let jt = system.jacobian_theta(&p.x, p.theta);
    let svd = sorted_svd(&jx);
    let cutoff = SIGMA_REL_TOL * svd.largest().max(1.0);
    let phi0 = svd.pinv_solve(&(-&jt), cutoff);
    let at = |eps| Derivatives { system, x: &p.x, theta: p.theta, eps }.tables(&event.null_right, &event.null_left, &phi0);
    let tables = at(epsilon);
    let half_step = at(epsilon / 2.0);
    let gap = tables.gap(&half_step);
    let instability = (gap > 1e-6 * tables.max_abs().max(1.0)).then_some(AbeInstability { half_step, gap });
    Ok(AbeCoefficients { epsilon, tables, phi0, instability })
}

/// Coefficients below this fraction of the largest one are treated as zero.
const COEFF_REL_TOL: f64 = 1e-6;

/// Branch tangents at a bifurcation from the real root directions of the
/// algebraic bifurcation equations. The event must carry coefficients. When
/// there is no real root direction only `incoming` is returned.
pub fn enumerate_branches(event: &SingularEvent, incoming: Option<&TangentVector>) -> Result<Vec<TangentVector>> {
    let abe = event
        .abe_coeffs
        .as_ref()
        .ok_or_else(|| ContinuationError::Invalid("event has no bifurcation coefficients".into()))?;
    let t = &abe.tables;
    let scale = t.max_abs();
    if scale <= 1e-12 {
        return Err(ContinuationError::UndeterminedBranching);
    }
    let directions: Vec<Vec<f64>> = match event.null_right.len() {
        1 => quadratic_directions(t.omega_ijp[0][0][0] / scale, t.omega_ij[0][0] / scale, t.omega_i[0] / scale),
        2 => planar_directions(t, scale),
        k => return Err(ContinuationError::UnsupportedNullspace(k)),
    };
    let mut out: Vec<TangentVector> = Vec::new();
    for xi in directions {
        let mut dx = &abe.phi0 * xi[0];
        for (j, phi) in event.null_right.iter().enumerate() {
            dx += phi * xi[j + 1];
        }
        let tangent = TangentVector::normalized(dx, xi[0]);
        if out.iter().all(|o| o.dot(&tangent).abs() < 1.0 - 1e-6) {
            out.push(tangent);
        }
    }
    if out.is_empty() {
        out.extend(incoming.cloned());
    }
    Ok(out)
}

/// Directions `(xi_0, xi_1)` with `a xi_1^2 + 2 b xi_1 xi_0 + c xi_0^2 = 0`.
fn quadratic_directions(a: f64, b: f64, c: f64) -> Vec<Vec<f64>> {
    let zero = |v: f64| v.abs() <= COEFF_REL_TOL;
    if zero(a) {
        let mut out = vec![vec![0.0, 1.0]];
        if !zero(b) {
            out.push(vec![1.0, -c / (2.0 * b)]);
        }
        return out;
    }
    let disc = b * b - a * c;
    if disc < -COEFF_REL_TOL {
        return Vec::new();
    }
    let root = disc.max(0.0).sqrt();
    let mut out = vec![vec![1.0, (-b + root) / a]];
    if root > COEFF_REL_TOL {
        out.push(vec![1.0, (-b - root) / a]);
    }
    out
}

/// Root directions of the two-equation system on the unit sphere, found by
/// Newton from a spread of starting directions.
fn planar_directions(t: &AbeTables, scale: f64) -> Vec<Vec<f64>> {
    let eq = |i: usize, xi: &Vector3<f64>| -> (f64, Vector3<f64>) {
        let mut val = t.omega_i[i] * xi[0] * xi[0];
        let mut grad = Vector3::new(2.0 * t.omega_i[i] * xi[0], 0.0, 0.0);
        for j in 0..2 {
            val += 2.0 * t.omega_ij[i][j] * xi[j + 1] * xi[0];
            grad[0] += 2.0 * t.omega_ij[i][j] * xi[j + 1];
            grad[j + 1] += 2.0 * t.omega_ij[i][j] * xi[0];
            for p in 0..2 {
                let w = t.omega_ijp[i][j][p];
                val += w * xi[j + 1] * xi[p + 1];
                grad[j + 1] += w * xi[p + 1];
                grad[p + 1] += w * xi[j + 1];
            }
        }
        (val / scale, grad / scale)
    };
    let samples = 600;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut found: Vec<Vector3<f64>> = Vec::new();
    for k in 0..samples {
        let z = 1.0 - 2.0 * (k as f64 + 0.5) / samples as f64;
        let r = (1.0 - z * z).sqrt();
        let mut xi = Vector3::new(z, r * (golden * k as f64).cos(), r * (golden * k as f64).sin());
        let mut converged = false;
        for _ in 0..50 {
            let (f1, g1) = eq(0, &xi);
            let (f2, g2) = eq(1, &xi);
            let f3 = xi.norm_squared() - 1.0;
            if f1.abs().max(f2.abs()).max(f3.abs()) < 1e-13 {
                converged = true;
                break;
            }
            let jac = Matrix3::from_rows(&[g1.transpose(), g2.transpose(), (xi * 2.0).transpose()]);
            match jac.lu().solve(&Vector3::new(-f1, -f2, -f3)) {
                Some(step) if step.iter().all(|v| v.is_finite()) => xi += step,
                _ => break,
            }
        }
        if converged && found.iter().all(|f| f.dot(&xi).abs() < 1.0 - 1e-8) {
            found.push(xi);
        }
    }
    found.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    found.into_iter().map(|v| vec![v[0], v[1], v[2]]).collect()
}

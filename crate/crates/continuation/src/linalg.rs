use nalgebra::{DMatrix, DVector};

/// Pivots below this fraction of the largest one count as zero after the
/// rows have been scaled to unit max norm.
const PIVOT_TOL: f64 = 1e-14;

/// Row scales bringing every row to unit max norm (zero rows keep scale 1).
fn row_scales(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(a.nrows(), |i, _| {
        let m = a.row(i).amax();
        if m > 0.0 {
            1.0 / m
        } else {
            1.0
        }
    })
}

fn equilibrated_lu(a: &DMatrix<f64>) -> (nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, DVector<f64>, bool) {
    let scales = row_scales(a);
    let mut scaled = a.clone();
    for (i, sc) in scales.iter().enumerate() {
        scaled.row_mut(i).scale_mut(*sc);
    }
    let lu = scaled.lu();
    let diag = lu.u().diagonal();
    let big = diag.amax();
    let singular = big == 0.0 || diag.iter().any(|d| d.abs() <= PIVOT_TOL * big);
    (lu, scales, singular)
}

/// LU solve with row equilibration that refuses numerically singular matrices.
pub(crate) fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (lu, scales, singular) = equilibrated_lu(a);
    if singular {
        return None;
    }
    lu.solve(&b.component_mul(&scales)).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Sign of the determinant: `1`, `-1`, or `0` when numerically singular.
pub(crate) fn det_sign(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let (lu, _, singular) = equilibrated_lu(a);
    if singular {
        return 0.0;
    }
    let sign: f64 = lu.u().diagonal().iter().map(|d| d.signum()).product();
    sign * lu.p().determinant::<f64>()
}

/// Singular values in descending order with matching left/right vectors.
pub(crate) struct SortedSvd {
    pub sigma: Vec<f64>,
    pub left: Vec<DVector<f64>>,
    pub right: Vec<DVector<f64>>,
}

pub(crate) fn sorted_svd(a: &DMatrix<f64>) -> SortedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    SortedSvd {
        sigma: order.iter().map(|&i| svd.singular_values[i]).collect(),
        left: order.iter().map(|&i| u.column(i).into_owned()).collect(),
        right: order.iter().map(|&i| vt.row(i).transpose()).collect(),
    }
}

impl SortedSvd {
    pub fn largest(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.sigma.last().copied().unwrap_or(0.0)
    }

    /// Truncated pseudo-inverse applied to `b`.
    pub fn pinv_solve(&self, b: &DVector<f64>, cutoff: f64) -> DVector<f64> {
        let mut y = DVector::zeros(self.right.first().map_or(0, |v| v.len()));
        for k in 0..self.sigma.len() {
            if self.sigma[k] > cutoff {
                y += &self.right[k] * (self.left[k].dot(b) / self.sigma[k]);
            }
        }
        y
    }
}

/// Right nullspace of a wide `d x (d+1)` matrix, by padding it square.
pub(crate) fn wide_nullspace(a: &DMatrix<f64>, rel_tol: f64) -> Vec<DVector<f64>> {
    let (r, c) = a.shape();
    let mut sq = DMatrix::zeros(c, c);
    sq.view_mut((0, 0), (r, c)).copy_from(a);
    let svd = sorted_svd(&sq);
    let cutoff = rel_tol * svd.largest().max(1.0);
    (0..c).filter(|&k| svd.sigma[k] <= cutoff).map(|k| svd.right[k].clone()).collect()
}

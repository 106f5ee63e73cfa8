use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::VoiHessian;

/// Which sign of the projected Hessian marks a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Negative semi-definite, as literally stated for the maximization form.
    MaximizationNegative,
    /// Positive semi-definite, matching minimization of `F`.
    #[default]
    MinimizationPositive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Definiteness {
    pub is_solution: bool,
    /// Smallest eigenvalue under `MinimizationPositive`, largest otherwise.
    pub extreme_eigenvalue: f64,
}

const EIG_TOL: f64 = 1e-8;

/// Orthonormal basis of `ker(J)`, `mn x n(m-1)`.
///
/// Each state block uses Helmert contrasts `(1,..,1,-k,0,..) / sqrt(k(k+1))`.
/// With one action the basis is empty.
pub fn constraint_nullspace_basis(n_states: usize, n_actions: usize) -> DMatrix<f64> {
    let m = n_actions;
    let cols = n_states * m.saturating_sub(1);
    let mut basis = DMatrix::zeros(n_states * m, cols);
    for s in 0..n_states {
        for k in 1..m {
            let col = s * (m - 1) + (k - 1);
            let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
            for a in 0..k {
                basis[(s * m + a, col)] = scale;
            }
            basis[(s * m + k, col)] = -(k as f64) * scale;
        }
    }
    basis
}

/// Eigenvalue test of `Gamma^T H Gamma` where `H` is the policy block.
pub fn projected_hessian_definiteness(hessian: &VoiHessian, basis: &DMatrix<f64>, convention: Convention) -> Definiteness {
    if basis.ncols() == 0 {
        return Definiteness { is_solution: true, extreme_eigenvalue: 0.0 };
    }
    let h = hessian.policy_block();
    let projected = basis.transpose() * h * basis;
    let sym = (&projected + projected.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    match convention {
        Convention::MinimizationPositive => {
            let lo = eig.min();
            Definiteness { is_solution: lo >= -EIG_TOL, extreme_eigenvalue: lo }
        }
        Convention::MaximizationNegative => {
            let hi = eig.max();
            Definiteness { is_solution: hi <= EIG_TOL, extreme_eigenvalue: hi }
        }
    }
}

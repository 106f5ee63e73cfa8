//! Predictor-corrector path following over a generic residual system
//! `G(x, theta) = 0`: parameter continuation, pseudo-arc-length continuation
//! with adaptive steps, singular-point classification, algebraic bifurcation
//! equations and branch enumeration. The value-of-information Lagrangian is
//! one instantiation (see [`voi`]); [`systems`] holds scalar test systems.

mod linalg;
mod singular;
mod steps;
pub mod systems;
mod trace;
pub mod voi;

pub use singular::{abe_coefficients, classify_point, enumerate_branches, AbeCoefficients, AbeInstability, AbeTables};
pub use steps::{
    adaptive_steplength, bordered_operator, compute_tangent, correct_pal, correct_pal_weighted, correct_parameter,
    predictor, Correction,
};
pub use trace::{trace_branch, trace_branch_with, BranchSeed, TraceOptions, TraceResult, TraceStatus};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContinuationError {
    #[error("singular system: {0}")]
    Singular(String),
    #[error("Jacobian singular at Newton iterate {iteration} (residual {residual:e})")]
    FoldStall { iteration: usize, residual: f64 },
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("corrector rejected the step after {iterations} iterations (residual {residual:e})")]
    StepRejected { iterations: usize, residual: f64 },
    #[error("all bifurcation equation coefficients vanish; branching undetermined")]
    UndeterminedBranching,
    #[error("branch enumeration for a {0}-dimensional nullspace is not supported")]
    UnsupportedNullspace(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Voi(#[from] voi_core::VoiError),
}

pub type Result<T> = std::result::Result<T, ContinuationError>;

/// A parameterized square system `G: R^d x R -> R^d`.
pub trait ResidualSystem: Sync {
    fn dim(&self) -> usize;
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64>;
    fn jacobian_x(&self, x: &DVector<f64>, theta: f64) -> DMatrix<f64>;
    fn jacobian_theta(&self, x: &DVector<f64>, theta: f64) -> DVector<f64>;

    /// Largest fraction of the Newton update `dx` that keeps `x` in the domain.
    fn max_step(&self, _x: &DVector<f64>, _dx: &DVector<f64>) -> f64 {
        1.0
    }

    /// Moves a predicted point back into the domain.
    fn project(&self, _x: &mut DVector<f64>) {}

    /// Solves `J_x y = b` by exploiting structure. `None` means no structured
    /// solve is available here and callers fall back to dense factorization.
    fn structured_solve(&self, _x: &DVector<f64>, _theta: f64, _b: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationPoint {
    pub x: DVector<f64>,
    pub theta: f64,
    /// Accumulated arc length.
    pub arclen: f64,
    /// Sup norm of the residual; infinite for unchecked predictions.
    pub residual_norm: f64,
}

impl ContinuationPoint {
    pub fn new(x: DVector<f64>, theta: f64) -> Self {
        ContinuationPoint { x, theta, arclen: 0.0, residual_norm: f64::INFINITY }
    }

    /// Same point with the residual norm evaluated.
    pub fn evaluated<S: ResidualSystem + ?Sized>(mut self, system: &S) -> Self {
        self.residual_norm = system.residual(&self.x, self.theta).amax();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub dx: DVector<f64>,
    pub dtheta: f64,
    pub normalized: bool,
}

impl TangentVector {
    /// Scales to unit Euclidean norm over `(dx, dtheta)`.
    pub fn normalized(dx: DVector<f64>, dtheta: f64) -> Self {
        let norm = (dx.norm_squared() + dtheta * dtheta).sqrt();
        TangentVector { dx: dx / norm, dtheta: dtheta / norm, normalized: true }
    }

    pub fn dot(&self, other: &TangentVector) -> f64 {
        self.dx.dot(&other.dx) + self.dtheta * other.dtheta
    }

    pub fn negated(&self) -> Self {
        TangentVector { dx: -&self.dx, dtheta: -self.dtheta, normalized: self.normalized }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Regular,
    Fold,
    Bifurcation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularEvent {
    pub location: ContinuationPoint,
    pub kind: PointKind,
    pub nullspace_dim: usize,
    pub smallest_singular_value: f64,
    pub abe_coeffs: Option<AbeCoefficients>,
    pub branch_tangents: Vec<TangentVector>,
    /// Actions entering the support, for events on the value-of-information system.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<usize>,
    /// Right singular vectors `phi_j` spanning `ker J_x`.
    #[serde(skip)]
    pub null_right: Vec<DVector<f64>>,
    /// Left singular vectors `psi_i` spanning `ker J_x^T`.
    #[serde(skip)]
    pub null_left: Vec<DVector<f64>>,
}

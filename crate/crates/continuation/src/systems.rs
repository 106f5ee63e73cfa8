//! Canonical systems with known solution curves.

use nalgebra::{DMatrix, DVector};

use crate::ResidualSystem;

/// `x - theta = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Line;

/// `x^2 + theta - 1 = 0`, a turning point at `(0, 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fold;

/// `theta x - x^3 = 0`, a pitchfork at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pitchfork;

/// `theta x - x^2 = 0`, a transcritical crossing at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Transcritical;

/// `(theta x - x^2, theta y - y^2)`, a two-dimensional kernel at the origin.
#[derive(Debug, Clone, Copy, Default)]
pub struct DoubleTranscritical;

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn scalar_m(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

impl ResidualSystem for Line {
    fn dim(&self) -> usize {
        1
    }
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        scalar(x[0] - theta)
    }
    fn jacobian_x(&self, _x: &DVector<f64>, _theta: f64) -> DMatrix<f64> {
        scalar_m(1.0)
    }
    fn jacobian_theta(&self, _x: &DVector<f64>, _theta: f64) -> DVector<f64> {
        scalar(-1.0)
    }
}

impl ResidualSystem for Fold {
    fn dim(&self) -> usize {
        1
    }
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        scalar(x[0] * x[0] + theta - 1.0)
    }
    fn jacobian_x(&self, x: &DVector<f64>, _theta: f64) -> DMatrix<f64> {
        scalar_m(2.0 * x[0])
    }
    fn jacobian_theta(&self, _x: &DVector<f64>, _theta: f64) -> DVector<f64> {
        scalar(1.0)
    }
}

impl ResidualSystem for Pitchfork {
    fn dim(&self) -> usize {
        1
    }
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        scalar(theta * x[0] - x[0].powi(3))
    }
    fn jacobian_x(&self, x: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        scalar_m(theta - 3.0 * x[0] * x[0])
    }
    fn jacobian_theta(&self, x: &DVector<f64>, _theta: f64) -> DVector<f64> {
        scalar(x[0])
    }
}

impl ResidualSystem for Transcritical {
    fn dim(&self) -> usize {
        1
    }
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        scalar(theta * x[0] - x[0] * x[0])
    }
    fn jacobian_x(&self, x: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        scalar_m(theta - 2.0 * x[0])
    }
    fn jacobian_theta(&self, x: &DVector<f64>, _theta: f64) -> DVector<f64> {
        scalar(x[0])
    }
}

impl ResidualSystem for DoubleTranscritical {
    fn dim(&self) -> usize {
        2
    }
    fn residual(&self, x: &DVector<f64>, theta: f64) -> DVector<f64> {
        DVector::from_fn(2, |i, _| theta * x[i] - x[i] * x[i])
    }
    fn jacobian_x(&self, x: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| if i == j { theta - 2.0 * x[i] } else { 0.0 })
    }
    fn jacobian_theta(&self, x: &DVector<f64>, _theta: f64) -> DVector<f64> {
        x.clone()
    }
}

use serde::{Deserialize, Serialize};

use crate::{MdpError, Result};

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    /// Validates that `probs` is nonnegative and sums to one within 1e-10.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(MdpError::Degenerate("empty state distribution".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(MdpError::Degenerate("state probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(MdpError::Degenerate(format!("state probabilities sum to {total}")));
        }
        Ok(StateDistribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        StateDistribution { probs: vec![1.0 / n as f64; n] }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl std::ops::Index<usize> for StateDistribution {
    type Output = f64;

    fn index(&self, s: usize) -> &f64 {
        &self.probs[s]
    }
}

/// Laplace-smoothed visitation frequencies,
/// `p(s) = (count_s + smoothing) / sum_t (count_t + smoothing)`.
pub fn estimate_state_prior(visit_counts: &[u64], smoothing: f64) -> Result<StateDistribution> {
    if !(smoothing.is_finite() && smoothing >= 0.0) {
        return Err(MdpError::Usage(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let total: f64 = visit_counts.iter().map(|&c| c as f64 + smoothing).sum();
    if visit_counts.is_empty() || total <= 0.0 {
        return Err(MdpError::Degenerate("all visit counts are zero and smoothing is zero".into()));
    }
    let probs = visit_counts.iter().map(|&c| (c as f64 + smoothing) / total).collect();
    Ok(StateDistribution { probs })
}

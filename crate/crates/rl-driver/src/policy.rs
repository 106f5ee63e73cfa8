use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use voi_core::{Policy, QTable, StateDistribution, DEFAULT_FLOOR};

use crate::{DriverError, Result};

/// Draws an action from row `state` of `policy`.
pub fn action_from_policy<R: Rng + ?Sized>(policy: &Policy, state: usize, rng: &mut R) -> usize {
    draw(&policy.row(state), rng)
}

/// Index drawn with probability proportional to `weights`.
pub(crate) fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u = rng.gen::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (a, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return a;
        }
    }
    weights.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    EpsilonGreedy,
    Softmax,
}

/// `EpsilonGreedy`: `1 - eps` on the cheapest action plus `eps / m` everywhere.
/// `Softmax`: rows proportional to `exp(-Q(s,a) / tau)`.
pub fn baseline_policy(kind: BaselineKind, q: &QTable, rate: f64) -> Result<Policy> {
    let (n, m) = q.values.shape();
    let probs = match kind {
        BaselineKind::EpsilonGreedy => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(DriverError::Usage(format!("epsilon {rate} not in [0,1]")));
            }
            let mut p = DMatrix::from_element(n, m, rate / m as f64);
            for s in 0..n {
                p[(s, q.argmin(s))] += 1.0 - rate;
            }
            p
        }
        BaselineKind::Softmax => {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(DriverError::Usage(format!("temperature {rate} must be > 0")));
            }
            let mut p = DMatrix::zeros(n, m);
            for s in 0..n {
                let lo = q.row_min(s);
                let z: f64 = (0..m).map(|a| (-(q.values[(s, a)] - lo) / rate).exp()).sum();
                for a in 0..m {
                    p[(s, a)] = (-(q.values[(s, a)] - lo) / rate).exp() / z;
                }
            }
            p
        }
    };
    Ok(Policy::new(probs, DEFAULT_FLOOR)?)
}

/// `sum_s p(s) sum_a then(a|s) (-ln now(a|s))`.
pub fn policy_cross_entropy(now: &Policy, then: &Policy, prior: &StateDistribution) -> Result<f64> {
    if now.probs().shape() != then.probs().shape() || prior.len() != now.n_states() {
        return Err(DriverError::Usage("policies and prior disagree in shape".into()));
    }
    let mut ce = 0.0;
    for s in 0..now.n_states() {
        for a in 0..now.n_actions() {
            ce -= prior[s] * then.get(s, a) * now.get(s, a).ln();
        }
    }
    Ok(ce)
}

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use voi_core::{Policy, StateDistribution};

use crate::policy::policy_cross_entropy;
use crate::{DriverError, Result};

/// `start / (1 + c k^power)` with `c` chosen so that the value reaches `end`
/// at `k = horizon - 1`; constant at `end` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversePolynomial {
    pub start: f64,
    pub end: f64,
    pub horizon: usize,
    pub power: f64,
}

impl InversePolynomial {
    pub fn new(start: f64, end: f64, horizon: usize) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && start >= end && end >= 0.0) {
            return Err(DriverError::Usage(format!("schedule needs start >= end >= 0, got {start} -> {end}")));
        }
        Ok(InversePolynomial { start, end, horizon, power: 0.8 })
    }

    pub fn value(&self, k: usize) -> f64 {
        let last = self.horizon.saturating_sub(1) as f64;
        if k as f64 >= last {
            return self.end;
        }
        if self.end == 0.0 {
            return self.start * (1.0 - k as f64 / last);
        }
        let c = (self.start / self.end - 1.0) / last.powf(self.power);
        self.start / (1.0 + c * (k as f64).powf(self.power))
    }
}

/// Cross-entropy feedback on the exploration rate `1/theta`: a large change
/// between policies a fixed number of episodes apart lowers the rate, a
/// small one raises it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossEntropyRule {
    pub threshold: f64,
    pub decrease: f64,
    pub increase: f64,
    pub lag: usize,
    pub min_rate: f64,
    pub max_rate: f64,
}

impl Default for CrossEntropyRule {
    fn default() -> Self {
        CrossEntropyRule { threshold: 0.35, decrease: 0.925, increase: 1.025, lag: 20, min_rate: 0.01, max_rate: 0.75 }
    }
}

/// Exploration-rate state for the cross-entropy method: the rate and the
/// policies of the last `lag` episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub rule: CrossEntropyRule,
    pub rate: f64,
    history: VecDeque<Policy>,
}

impl ScheduleState {
    pub fn new(rule: CrossEntropyRule, rate: f64) -> Result<Self> {
        if !(rule.min_rate > 0.0 && rule.min_rate <= rule.max_rate && rule.lag > 0) {
            return Err(DriverError::Usage("cross-entropy rule needs 0 < min_rate <= max_rate and lag > 0".into()));
        }
        Ok(ScheduleState { rule, rate: rate.clamp(rule.min_rate, rule.max_rate), history: VecDeque::new() })
    }

    /// Records the policy of the episode just finished and, once a policy
    /// `lag` episodes older is available, adapts the rate.
    pub fn observe(&mut self, policy: &Policy, prior: &StateDistribution) -> Result<f64> {
        if self.history.len() == self.rule.lag {
            let then = self.history.pop_front().expect("history is full");
            self.rate = cross_entropy_adapt(&self.rule, self.rate, policy, &then, prior)?;
        }
        self.history.push_back(policy.clone());
        Ok(self.rate)
    }
}

/// One application of the cross-entropy rule to `rate`.
pub fn cross_entropy_adapt(
    rule: &CrossEntropyRule,
    rate: f64,
    now: &Policy,
    then: &Policy,
    prior: &StateDistribution,
) -> Result<f64> {
    let ce = policy_cross_entropy(now, then, prior)?;
    let factor = if ce >= rule.threshold { rule.decrease } else { rule.increase };
    Ok((rate * factor).clamp(rule.min_rate, rule.max_rate))
}

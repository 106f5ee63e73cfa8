//! Finite Markov decision processes with cost semantics (lower is better).
//!
//! Models are immutable once built. Randomness only enters through the
//! caller-owned generator passed to [`step`], so a model can be shared freely
//! across threads.

mod env;
mod prior;

pub use env::{build_env, EnvKind, EnvSpec};
pub use prior::{estimate_state_prior, StateDistribution};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default discount factor stored in generated models.
pub const DEFAULT_DISCOUNT: f64 = 0.85;
/// Default cap on the number of steps in one episode.
pub const DEFAULT_EPISODE_CAP: usize = 500;

const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MdpError>;

/// A finite MDP. `cost[s][a]` is paid when taking `a` in `s`;
/// `kernel[s][a][s']` is the transition probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub cost: Vec<Vec<f64>>,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub start: Vec<f64>,
    pub terminals: Vec<usize>,
    pub discount: f64,
    /// Half-width of uniform noise added to each realized cost.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub cost_noise: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

/// Outcome of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next_state: usize,
    pub cost: f64,
    pub terminal: bool,
}

/// Read-only view of the exact model tables.
#[derive(Debug, Clone, Copy)]
pub struct ModelTables<'a> {
    pub n_states: usize,
    pub n_actions: usize,
    pub cost: &'a [Vec<f64>],
    pub kernel: &'a [Vec<Vec<f64>>],
}

impl<'a> ModelTables<'a> {
    pub fn states(&self) -> std::ops::Range<usize> {
        0..self.n_states
    }

    pub fn actions(&self) -> std::ops::Range<usize> {
        0..self.n_actions
    }
}

impl MdpModel {
    /// Builds a model and checks every invariant.
    pub fn new(
        cost: Vec<Vec<f64>>,
        kernel: Vec<Vec<Vec<f64>>>,
        start: Vec<f64>,
        mut terminals: Vec<usize>,
        discount: f64,
    ) -> Result<Self> {
        terminals.sort_unstable();
        terminals.dedup();
        let model = MdpModel {
            n_states: cost.len(),
            n_actions: cost.first().map_or(0, |r| r.len()),
            cost,
            kernel,
            start,
            terminals,
            discount,
            cost_noise: 0.0,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_cost_noise(mut self, half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width >= 0.0) {
            return Err(MdpError::Config(format!("cost noise {half_width} must be >= 0")));
        }
        self.cost_noise = half_width;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n_states, self.n_actions);
        if n == 0 || m == 0 {
            return Err(MdpError::Config("model needs at least one state and one action".into()));
        }
        if self.cost.len() != n || self.cost.iter().any(|r| r.len() != m) {
            return Err(MdpError::Config(format!("cost table must be {n}x{m}")));
        }
        if self.cost.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MdpError::Config("costs must be finite".into()));
        }
        if self.kernel.len() != n {
            return Err(MdpError::Config(format!("kernel must have {n} state blocks")));
        }
        for (s, block) in self.kernel.iter().enumerate() {
            if block.len() != m {
                return Err(MdpError::Config(format!("kernel block {s} must have {m} rows")));
            }
            for (a, row) in block.iter().enumerate() {
                if row.len() != n {
                    return Err(MdpError::Config(format!("kernel row ({s},{a}) must have {n} entries")));
                }
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(MdpError::Config(format!("kernel row ({s},{a}) has a negative entry")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > ROW_TOL {
                    return Err(MdpError::Config(format!("kernel row ({s},{a}) sums to {total}")));
                }
            }
        }
        if self.start.len() != n || self.start.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(MdpError::Config("start distribution is malformed".into()));
        }
        let total: f64 = self.start.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            return Err(MdpError::Config(format!("start distribution sums to {total}")));
        }
        if let Some(&t) = self.terminals.iter().find(|&&t| t >= n) {
            return Err(MdpError::Config(format!("terminal state {t} out of range")));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(MdpError::Config(format!("discount {} not in [0,1)", self.discount)));
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals.binary_search(&s).is_ok()
    }

    /// Indices of all non-terminal states in increasing order.
    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| !self.is_terminal(s)).collect()
    }

    pub fn tables(&self) -> ModelTables<'_> {
        enumerate_model(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: MdpModel = serde_json::from_str(text)?;
        model.terminals.sort_unstable();
        model.terminals.dedup();
        model.validate()?;
        Ok(model)
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.start, rng)
    }
}

/// Exposes the exact cost table and kernel.
pub fn enumerate_model(model: &MdpModel) -> ModelTables<'_> {
    ModelTables {
        n_states: model.n_states,
        n_actions: model.n_actions,
        cost: &model.cost,
        kernel: &model.kernel,
    }
}

/// Samples one transition from `(state, action)`.
///
/// `terminal` reports whether the next state is terminal, so stepping out of
/// an absorbing goal returns the goal again with `terminal = true`.
pub fn step<R: Rng + ?Sized>(model: &MdpModel, state: usize, action: usize, rng: &mut R) -> Result<Step> {
    if state >= model.n_states || action >= model.n_actions {
        return Err(MdpError::Usage(format!(
            "(state {state}, action {action}) out of range for {}x{} model",
            model.n_states, model.n_actions
        )));
    }
    let next_state = sample_index(&model.kernel[state][action], rng);
    let mut cost = model.cost[state][action];
    if model.cost_noise > 0.0 {
        cost += rng.gen_range(-model.cost_noise..=model.cost_noise);
    }
    Ok(Step { next_state, cost, terminal: model.is_terminal(next_state) })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

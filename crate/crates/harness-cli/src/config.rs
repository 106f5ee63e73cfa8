use std::path::PathBuf;

use continuation::TraceOptions;
use mdp_env::EnvSpec;
use rl_driver::{AgentConfig, Method};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

/// Continuation settings for `trace` and the bifurcation export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub theta_start: f64,
    pub theta_max: f64,
    /// Residual tolerance for accepted points.
    pub tol: f64,
    /// Relative singular-value threshold for singular points.
    pub sigma_tol: f64,
    /// Finite-difference step for the bifurcation equation coefficients.
    pub abe_epsilon: f64,
    pub delta_init: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub max_branches: usize,
    /// Parameter values landed exactly and reported in the path.
    pub samples: Vec<f64>,
}

impl Default for TraceSection {
    fn default() -> Self {
        let base = TraceOptions::default();
        TraceSection {
            theta_start: 1e-3,
            theta_max: 50.0,
            tol: 1e-10,
            sigma_tol: base.sigma_rel,
            abe_epsilon: base.abe_epsilon,
            delta_init: 0.05,
            delta_min: base.delta_min,
            delta_max: base.delta_max,
            max_branches: 8,
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub smoothing_window: usize,
    pub smoothing_order: usize,
    /// Number of final episodes averaged into the terminal cost.
    pub terminal_window: usize,
    /// Significance level for the win flag.
    pub alpha: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection { smoothing_window: 21, smoothing_order: 4, terminal_window: 200, alpha: 0.05 }
    }
}

/// One experiment: every listed method is trained once per seed on the
/// same environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Seed for building the environment; shared by all runs.
    pub env_seed: u64,
    pub environment: EnvSpec,
    /// Learner settings; the method is taken from `methods`.
    pub agent: AgentConfig,
    pub trace: TraceSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("runs"),
            methods: vec![Method::PathFollowing, Method::EpsilonGreedy, Method::Softmax],
            seeds: (0..30).collect(),
            env_seed: 0,
            environment: EnvSpec::Gridworld { width: 8, height: 8, obstacle_frac: 0.1, step_cost: 1.0, slip: 0.1 },
            agent: AgentConfig::default(),
            trace: TraceSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e| HarnessError::usage(format!("config: {e}")))?;
        if value.get("agent").and_then(|a| a.get("method")).is_some() {
            return Err(HarnessError::usage("config: set `methods` at the top level, not `agent.method`"));
        }
        let config: RunConfig = value.try_into().map_err(|e| HarnessError::usage(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        let mut value = toml::Table::try_from(self).expect("configuration is representable in TOML");
        if let Some(toml::Value::Table(agent)) = value.get_mut("agent") {
            agent.remove("method");
        }
        toml::to_string(&value).expect("TOML tables serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(HarnessError::usage("at least one method is required"));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::usage("at least one seed is required"));
        }
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.name());
        seen.dedup();
        if seen.len() != self.methods.len() {
            return Err(HarnessError::usage("methods must be distinct"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(HarnessError::usage("seeds must be distinct"));
        }
        self.agent.validate().map_err(|e| HarnessError::usage(e.to_string()))?;
        let t = &self.trace;
        let positive = [
            ("trace.theta_start", t.theta_start),
            ("trace.tol", t.tol),
            ("trace.sigma_tol", t.sigma_tol),
            ("trace.abe_epsilon", t.abe_epsilon),
            ("trace.delta_init", t.delta_init),
            ("trace.delta_min", t.delta_min),
            ("trace.delta_max", t.delta_max),
            ("report.alpha", self.report.alpha),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(HarnessError::usage(format!("{name} must be > 0, got {v}")));
        }
        if !(t.theta_start < t.theta_max && t.delta_min <= t.delta_max && t.max_branches > 0) {
            return Err(HarnessError::usage("trace bounds are out of order"));
        }
        let r = &self.report;
        if r.smoothing_window == 0 || r.smoothing_window.is_multiple_of(2) || r.terminal_window == 0 {
            return Err(HarnessError::usage("smoothing window must be odd and windows > 0"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Agent settings for one method.
    pub fn agent_for(&self, method: Method) -> AgentConfig {
        AgentConfig { method, ..self.agent.clone() }
    }

    pub fn trace_options(&self) -> continuation::voi::VoiTraceOptions {
        let t = &self.trace;
        continuation::voi::VoiTraceOptions {
            theta_start: t.theta_start,
            theta_max: t.theta_max,
            samples: t.samples.clone(),
            trace: TraceOptions {
                tol: t.tol,
                delta_init: t.delta_init,
                delta_min: t.delta_min,
                delta_max: t.delta_max,
                sigma_rel: t.sigma_tol,
                abe_epsilon: t.abe_epsilon,
                ..TraceOptions::default()
            },
            max_branches: t.max_branches,
            ..Default::default()
        }
    }
}

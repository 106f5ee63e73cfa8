use continuation::voi::{VoiContinuation, VoiStepOptions};
use continuation::SingularEvent;
use mdp_env::{estimate_state_prior, step, MdpModel, StateDistribution};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use voi_core::{
    ba_solve_from, mutual_information, state_groups, ActionMarginal, BaOptions, ExplorationRate, Policy, QTable,
    DEFAULT_FLOOR,
};

use crate::coupled::{coupled_q_update, TimescalePair, Transition};
use crate::policy::{baseline_policy, BaselineKind};
use crate::replay::{ReplayBuffer, ReplayConfig};
use crate::schedule::{CrossEntropyRule, InversePolynomial, ScheduleState};
use crate::{DriverError, Result};

/// Sup-norm tolerance for counting state groups.
pub const GROUP_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Value of information tracked by pseudo-arc-length continuation.
    PathFollowing,
    /// Value of information with an annealed exploration rate.
    VoiAnnealed,
    /// Value of information with the cross-entropy rate rule.
    VoiCrossEntropy,
    EpsilonGreedy,
    Softmax,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::PathFollowing, Method::VoiAnnealed, Method::VoiCrossEntropy, Method::EpsilonGreedy, Method::Softmax];

    pub fn name(self) -> &'static str {
        match self {
            Method::PathFollowing => "path_following",
            Method::VoiAnnealed => "voi_annealed",
            Method::VoiCrossEntropy => "voi_cross_entropy",
            Method::EpsilonGreedy => "epsilon_greedy",
            Method::Softmax => "softmax",
        }
    }

    pub fn is_voi(self) -> bool {
        matches!(self, Method::PathFollowing | Method::VoiAnnealed | Method::VoiCrossEntropy)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How often a value-of-information policy is recomputed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cadence {
    /// Once at the end of every episode.
    Episode,
    /// Every given number of environment steps and at episode ends.
    Steps(usize),
    /// Only once, before the first episode.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub method: Method,
    /// Episode budget; the learning-rate schedules end here.
    pub episodes: usize,
    pub episode_cap: usize,
    pub discount: f64,
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub omega_start: f64,
    pub omega_end: f64,
    pub epsilon: f64,
    pub temperature: f64,
    /// Exploration-rate (`1/theta`) annealing for `voi_annealed`, also the
    /// starting rate and bounds for `voi_cross_entropy`.
    pub rate_start: f64,
    pub rate_end: f64,
    pub cross_entropy: CrossEntropyRule,
    pub theta_init: f64,
    pub theta_max: f64,
    pub delta_mod: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub newton_tol: f64,
    /// Sup-norm policy change at which marginal sweeps stop.
    pub policy_accuracy: f64,
    pub cadence: Cadence,
    pub replay: ReplayConfig,
    /// Replayed transitions per environment step; zero disables replay.
    pub replay_batch: usize,
    /// Laplace smoothing of the visit-count state prior.
    pub prior_smoothing: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            method: Method::PathFollowing,
            episodes: 2000,
            episode_cap: mdp_env::DEFAULT_EPISODE_CAP,
            discount: 0.85,
            alpha_start: 0.6,
            alpha_end: 1e-4,
            omega_start: 0.25,
            omega_end: 1e-4,
            epsilon: 0.55,
            temperature: 0.55,
            rate_start: 0.75,
            rate_end: 0.01,
            cross_entropy: CrossEntropyRule::default(),
            theta_init: 0.85,
            theta_max: 50.0,
            delta_mod: 0.05,
            delta_min: 1e-6,
            delta_max: 0.5,
            newton_tol: 1e-8,
            policy_accuracy: 0.01,
            cadence: Cadence::Episode,
            replay: ReplayConfig::default(),
            replay_batch: 16,
            prior_smoothing: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("temperature", self.temperature),
            ("theta_init", self.theta_init),
            ("theta_max", self.theta_max),
            ("delta_mod", self.delta_mod),
            ("delta_min", self.delta_min),
            ("delta_max", self.delta_max),
            ("newton_tol", self.newton_tol),
            ("policy_accuracy", self.policy_accuracy),
            ("rate_end", self.rate_end),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(DriverError::Usage(format!("{name} must be > 0, got {v}")));
        }
        let unit = [
            ("alpha_start", self.alpha_start),
            ("alpha_end", self.alpha_end),
            ("omega_start", self.omega_start),
            ("omega_end", self.omega_end),
            ("epsilon", self.epsilon),
        ];
        if let Some((name, v)) = unit.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(DriverError::Usage(format!("{name} must lie in [0,1], got {v}")));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(DriverError::Usage(format!("discount {} not in [0,1)", self.discount)));
        }
        if self.episodes == 0 || self.episode_cap == 0 {
            return Err(DriverError::Usage("episode budget and cap must be > 0".into()));
        }
        if self.delta_min > self.delta_max || self.rate_end > self.rate_start || self.theta_init > self.theta_max {
            return Err(DriverError::Usage("bounds are out of order".into()));
        }
        if matches!(self.cadence, Cadence::Steps(0)) {
            return Err(DriverError::Usage("step cadence must be > 0".into()));
        }
        if !(self.prior_smoothing.is_finite() && self.prior_smoothing >= 0.0) {
            return Err(DriverError::Usage("prior_smoothing must be >= 0".into()));
        }
        Ok(())
    }

    fn step_options(&self) -> VoiStepOptions {
        VoiStepOptions {
            delta_mod: self.delta_mod,
            delta_min: self.delta_min,
            delta_max: self.delta_max,
            theta_max: self.theta_max,
            tol: self.newton_tol,
            ba: BaOptions { tol: self.policy_accuracy, max_iter: 200, floor: DEFAULT_FLOOR },
            ..VoiStepOptions::default()
        }
    }
}

/// Per-episode record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub total_cost: f64,
    pub steps: usize,
    /// The episode hit the step cap before reaching a terminal state.
    pub truncated: bool,
    /// Exploration parameter in use: `theta` for value-of-information
    /// methods, `epsilon` or the temperature for the baselines.
    pub theta: f64,
    pub mutual_information: f64,
    pub n_state_groups: usize,
    pub replay_size: usize,
    pub events: Vec<SingularEvent>,
}

/// Learner state carried across episodes.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub q: QTable,
    pub scales: TimescalePair,
    pub replay: ReplayBuffer,
    policy: Policy,
    handle: Option<VoiContinuation>,
    schedule: Option<ScheduleState>,
    marginal: Option<ActionMarginal>,
    visits: Vec<u64>,
    non_terminal: Vec<usize>,
    episode: usize,
    parameter: f64,
    mutual_information: f64,
    pending_events: Vec<SingularEvent>,
}

impl Agent {
    pub fn new(env: &MdpModel, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let (n, m) = (env.n_states, env.n_actions);
        let non_terminal = env.non_terminal_states();
        if non_terminal.is_empty() {
            return Err(DriverError::Usage("environment has no non-terminal states".into()));
        }
        let handle = match config.method {
            Method::PathFollowing => Some(VoiContinuation::new(config.theta_init, m, config.step_options())?),
            _ => None,
        };
        let schedule = match config.method {
            Method::VoiCrossEntropy => {
                let rule = CrossEntropyRule { min_rate: config.rate_end, max_rate: config.rate_start, ..config.cross_entropy };
                Some(ScheduleState::new(rule, config.rate_start)?)
            }
            _ => None,
        };
        let mut agent = Agent {
            q: QTable::zeros(n, m),
            scales: TimescalePair::zeros(n, m),
            replay: ReplayBuffer::new(config.replay)?,
            policy: Policy::uniform(n, m),
            handle,
            schedule,
            marginal: None,
            visits: vec![0; n],
            non_terminal,
            episode: 0,
            parameter: 0.0,
            mutual_information: 0.0,
            pending_events: Vec::new(),
            config,
        };
        agent.refresh_policy(false)?;
        Ok(agent)
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Visit-count prior over the non-terminal states.
    pub fn state_prior(&self) -> Result<StateDistribution> {
        let counts: Vec<u64> = self.non_terminal.iter().map(|&s| self.visits[s]).collect();
        Ok(estimate_state_prior(&counts, self.config.prior_smoothing)?)
    }

    /// Cost table that drives action selection: the slow time scale.
    pub fn acting_table(&self) -> QTable {
        QTable { values: self.scales.v.clone() }
    }

    pub fn alpha(&self) -> f64 {
        schedule(self.config.alpha_start, self.config.alpha_end, self.config.episodes).value(self.episode)
    }

    pub fn omega(&self) -> f64 {
        schedule(self.config.omega_start, self.config.omega_end, self.config.episodes).value(self.episode)
    }

    /// Recomputes the acting policy. With `step` set, the path-following
    /// handle also advances one continuation step.
    fn refresh_policy(&mut self, step: bool) -> Result<()> {
        let cfg = &self.config;
        match cfg.method {
            Method::EpsilonGreedy => {
                self.policy = baseline_policy(BaselineKind::EpsilonGreedy, &self.acting_table(), cfg.epsilon)?;
                self.parameter = cfg.epsilon;
            }
            Method::Softmax => {
                self.policy = baseline_policy(BaselineKind::Softmax, &self.acting_table(), cfg.temperature)?;
                self.parameter = cfg.temperature;
            }
            Method::PathFollowing => {
                let q = self.acting_table().select_rows(&self.non_terminal);
                let prior = self.state_prior()?;
                let handle = self.handle.as_mut().expect("path following owns a handle");
                let result = if step { handle.advance(&q, &prior)? } else { handle.solve(&q, &prior)? };
                self.parameter = result.theta;
                self.mutual_information = result.mutual_information;
                self.pending_events.extend(result.event);
                self.policy = self.expand(result.policy.probs())?;
                return Ok(());
            }
            Method::VoiAnnealed | Method::VoiCrossEntropy => {
                let rate = match &self.schedule {
                    Some(s) => s.rate,
                    None => schedule(cfg.rate_start, cfg.rate_end, cfg.episodes).value(self.episode),
                };
                let theta = 1.0 / rate;
                let q = self.acting_table().select_rows(&self.non_terminal);
                let prior = self.state_prior()?;
                let init = self.marginal.clone().unwrap_or_else(|| ActionMarginal::uniform(q.n_actions()));
                let opts = BaOptions { tol: cfg.policy_accuracy, max_iter: 200, floor: DEFAULT_FLOOR };
                let sol = match ba_solve_from(&q, &prior, ExplorationRate::new(theta)?, &init, &opts) {
                    Ok(sol) => sol,
                    Err(voi_core::VoiError::IterationLimit { last, .. }) => *last,
                    Err(e) => return Err(e.into()),
                };
                self.parameter = theta;
                self.mutual_information = mutual_information(&sol.policy, &prior, &sol.marginal)?;
                self.policy = self.expand(sol.policy.probs())?;
                self.marginal = Some(sol.marginal);
                return Ok(());
            }
        }
        let prior = self.state_prior()?;
        let restricted = self.acting_rows()?;
        let marginal = ActionMarginal::from_policy(&restricted, &prior)?;
        self.mutual_information = mutual_information(&restricted, &prior, &marginal)?;
        Ok(())
    }

    /// Full-size policy from rows over the non-terminal states; terminal
    /// states act uniformly.
    fn expand(&self, rows: &DMatrix<f64>) -> Result<Policy> {
        let (n, m) = (self.q.n_states(), self.q.n_actions());
        let mut full = DMatrix::from_element(n, m, 1.0 / m as f64);
        for (r, &s) in self.non_terminal.iter().enumerate() {
            full.set_row(s, &rows.row(r));
        }
        Ok(Policy::new(full, DEFAULT_FLOOR)?)
    }

    fn act<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> Result<usize> {
        let v = &self.scales.v;
        let m = v.ncols();
        let row: Vec<f64> = match self.config.method {
            Method::EpsilonGreedy => {
                let eps = self.config.epsilon;
                let best = (0..m).fold(0, |b, a| if v[(state, a)] < v[(state, b)] { a } else { b });
                (0..m).map(|a| eps / m as f64 + if a == best { 1.0 - eps } else { 0.0 }).collect()
            }
            Method::Softmax => {
                let lo = v.row(state).min();
                let tau = self.config.temperature;
                (0..m).map(|a| (-(v[(state, a)] - lo) / tau).exp()).collect()
            }
            _ => self.policy.row(state),
        };
        Ok(crate::policy::draw(&row, rng))
    }

    fn learn<R: Rng + ?Sized>(&mut self, t: &Transition, rng: &mut R) -> Result<()> {
        let (alpha, omega, gamma) = (self.alpha(), self.omega(), self.config.discount);
        coupled_q_update(&mut self.scales, &mut self.q, t, alpha, omega, gamma);
        if self.config.replay_batch == 0 {
            return Ok(());
        }
        self.replay.push(*t);
        if self.replay.len() < self.config.replay_batch {
            return Ok(());
        }
        for sample in self.replay.sample(self.config.replay_batch, rng)? {
            let (a, o) = (alpha * sample.weight, omega * sample.weight);
            let td = coupled_q_update(&mut self.scales, &mut self.q, &sample.transition, a, o, gamma);
            self.replay.update_priority(sample.slot, td.abs());
        }
        Ok(())
    }

    /// Plays one episode from a start state drawn from the model, updating
    /// the tables after every step and the policy on the configured cadence.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, env: &MdpModel, rng: &mut R) -> Result<EpisodeMetrics> {
        let mut state = env.sample_start(rng);
        let (mut total_cost, mut steps, mut truncated) = (0.0, 0, true);
        while steps < self.config.episode_cap {
            if env.is_terminal(state) {
                truncated = false;
                break;
            }
            self.visits[state] += 1;
            let action = self.act(state, rng)?;
            let out = step(env, state, action, rng)?;
            let t = Transition { state, action, cost: out.cost, next_state: out.next_state, terminal: out.terminal };
            self.learn(&t, rng)?;
            total_cost += out.cost;
            steps += 1;
            state = out.next_state;
            if let Cadence::Steps(k) = self.config.cadence {
                if steps % k == 0 && self.config.method.is_voi() {
                    self.refresh_policy(true)?;
                }
            }
        }
        if truncated && env.is_terminal(state) {
            truncated = false;
        }
        if !self.config.method.is_voi() {
            self.refresh_policy(false)?;
        }
        let (theta, mutual_information) = (self.parameter, self.mutual_information);
        let n_state_groups = state_groups(&self.acting_rows()?, GROUP_TOL);
        self.finish_episode()?;
        Ok(EpisodeMetrics {
            episode: self.episode - 1,
            total_cost,
            steps,
            truncated,
            theta,
            mutual_information,
            n_state_groups,
            replay_size: self.replay.len(),
            events: std::mem::take(&mut self.pending_events),
        })
    }

    /// Policy rows of the non-terminal states.
    fn acting_rows(&self) -> Result<Policy> {
        Ok(Policy::new(self.policy.probs().select_rows(&self.non_terminal), DEFAULT_FLOOR)?)
    }

    /// Carries the state into the next episode.
    fn finish_episode(&mut self) -> Result<()> {
        self.episode += 1;
        if self.schedule.is_some() {
            let (prior, rows) = (self.state_prior()?, self.acting_rows()?);
            if let Some(schedule) = &mut self.schedule {
                schedule.observe(&rows, &prior)?;
            }
        }
        if self.config.method.is_voi() && self.config.cadence != Cadence::Never {
            self.refresh_policy(true)?;
        }
        Ok(())
    }
}

fn schedule(start: f64, end: f64, horizon: usize) -> InversePolynomial {
    InversePolynomial { start, end, horizon, power: 0.8 }
}

/// Plays one episode with `agent`; see [`Agent::run_episode`].
pub fn run_episode<R: Rng + ?Sized>(env: &MdpModel, agent: &mut Agent, rng: &mut R) -> Result<EpisodeMetrics> {
    agent.run_episode(env, rng)
}

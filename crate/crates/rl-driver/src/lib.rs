//! Coupled Q-learning whose exploration comes from the value of information,
//! either tracked by pseudo-arc-length continuation or solved at scheduled
//! exploration rates, next to epsilon-greedy and soft-max baselines.
//!
//! Costs are minimized throughout. Tables use the one-hot state-action basis,
//! so every update touches only the visited pair.

mod agent;
mod coupled;
mod policy;
mod replay;
mod schedule;

pub use agent::{run_episode, Agent, AgentConfig, Cadence, EpisodeMetrics, Method, GROUP_TOL};
pub use coupled::{coupled_q_update, TimescalePair, Transition};
pub use policy::{action_from_policy, baseline_policy, policy_cross_entropy, BaselineKind};
pub use replay::{ReplayBuffer, ReplayConfig, ReplaySample};
pub use schedule::{cross_entropy_adapt, CrossEntropyRule, InversePolynomial, ScheduleState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Voi(#[from] voi_core::VoiError),
    #[error(transparent)]
    Continuation(#[from] continuation::ContinuationError),
    #[error(transparent)]
    Mdp(#[from] mdp_env::MdpError),
}

pub type Result<T> = std::result::Result<T, DriverError>;

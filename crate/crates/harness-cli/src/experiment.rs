use std::path::{Path, PathBuf};
use std::time::Instant;

use continuation::voi::{trace_voi, VoiTrace};
use continuation::SingularEvent;
use mdp_env::{build_env, MdpModel, StateDistribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rl_driver::{Agent, Method};
use serde::{Deserialize, Serialize};
use voi_core::{ba_solve, mutual_information, voi_objective, ExplorationRate, QTable};

use crate::artifacts::{write_diagram, write_json, write_metrics, write_rows, DiagramRow, MetricsRow, PolicyFile};
use crate::model::optimal_q;
use crate::{HarnessError, Result, RunConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeEvent {
    pub episode: usize,
    pub event: SingularEvent,
}

/// Run metadata; kept apart from the metrics so those stay reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub method: Method,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub wall_time_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub method: Method,
    pub seed: u64,
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub runs: Vec<RunOutcome>,
}

impl ExperimentSummary {
    pub fn failures(&self) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(|r| r.error.is_some())
    }
}

pub fn run_dir_name(method: Method, seed: u64) -> String {
    format!("{method}-seed{seed:03}")
}

/// Trains every (method, seed) pair, writing one directory per run under
/// `out/runs` and the combined metrics to `out/metrics.csv`. A failing run
/// is recorded in its manifest and the others carry on.
pub fn run_experiment(config: &RunConfig, out: &Path) -> Result<ExperimentSummary> {
    config.validate()?;
    let env = build_env(&config.environment, config.env_seed).map_err(|e| HarnessError::usage(e.to_string()))?;
    std::fs::create_dir_all(out.join("runs"))?;
    std::fs::write(out.join("config.toml"), config.to_toml())?;
    let hash = config.hash();
    let jobs: Vec<(Method, u64)> =
        config.methods.iter().flat_map(|&m| config.seeds.iter().map(move |&s| (m, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let dir = out.join("runs").join(run_dir_name(method, seed));
            let started = Instant::now();
            let result = std::fs::create_dir_all(&dir).map_err(HarnessError::from).and_then(|_| train(config, &env, method, seed, &dir));
            let (metrics, error) = match result {
                Ok(m) => (m, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            let manifest = RunManifest {
                method,
                seed,
                config_hash: hash.clone(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_secs: started.elapsed().as_secs_f64(),
                error: error.clone(),
            };
            write_json(&dir.join("manifest.json"), &manifest)?;
            Ok(RunOutcome { method, seed, dir, metrics, error })
        })
        .collect::<Result<Vec<_>>>()?;
    let combined: Vec<MetricsRow> = runs.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    write_metrics(&out.join("metrics.csv"), &combined)?;
    Ok(ExperimentSummary { runs })
}

/// One training run; writes metrics, events, the final policy and, for
/// path following, the per-episode bifurcation diagram.
pub fn train(config: &RunConfig, env: &MdpModel, method: Method, seed: u64, dir: &Path) -> Result<Vec<MetricsRow>> {
    let mut agent = Agent::new(env, config.agent_for(method))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(config.agent.episodes);
    let mut events = Vec::new();
    let mut diagram = Vec::new();
    for _ in 0..config.agent.episodes {
        let m = agent.run_episode(env, &mut rng)?;
        events.extend(m.events.iter().cloned().map(|event| EpisodeEvent { episode: m.episode, event }));
        if method == Method::PathFollowing {
            diagram.push(DiagramRow { theta: m.theta, branch_id: events.len(), n_state_groups: m.n_state_groups });
        }
        rows.push(MetricsRow {
            episode: m.episode,
            method: method.name().to_string(),
            seed,
            total_cost: m.total_cost,
            steps: m.steps,
            theta: m.theta,
            mutual_information: m.mutual_information,
            n_state_groups: m.n_state_groups,
            replay_size: m.replay_size,
        });
    }
    write_metrics(&dir.join("metrics.csv"), &rows)?;
    write_json(&dir.join("events.json"), &events)?;
    write_json(&dir.join("policy.json"), &PolicyFile::from(agent.policy()))?;
    if method == Method::PathFollowing {
        write_diagram(&dir.join("diagram.csv"), &diagram)?;
    }
    Ok(rows)
}

/// Cost rows of the non-terminal states and a uniform prior over them.
pub fn continuation_problem(model: &MdpModel) -> Result<(QTable, StateDistribution)> {
    let states = model.non_terminal_states();
    if states.is_empty() {
        return Err(HarnessError::usage("model has no non-terminal states"));
    }
    Ok((optimal_q(model).select_rows(&states), StateDistribution::uniform(states.len())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathRow {
    pub branch_id: usize,
    pub step: usize,
    pub theta: f64,
    pub arclen: f64,
    pub residual_norm: f64,
    pub kkt_residual: f64,
    pub mutual_information: f64,
    pub objective_f: f64,
    pub n_state_groups: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchEvent {
    pub branch_id: usize,
    pub event: SingularEvent,
}

/// One row per accepted continuation point.
pub fn bifurcation_diagram(trace: &VoiTrace) -> Vec<DiagramRow> {
    trace
        .branches
        .iter()
        .flat_map(|b| b.points.iter())
        .map(|p| DiagramRow { theta: p.theta, branch_id: p.branch_id, n_state_groups: p.n_state_groups })
        .collect()
}

/// Continuation without learning: traces the solution set for the optimal
/// costs of `model` and writes the path, diagram, events and final policy.
pub fn trace_model(config: &RunConfig, model: &MdpModel, out: &Path) -> Result<VoiTrace> {
    let (q, prior) = continuation_problem(model)?;
    let trace = trace_voi(&q, &prior, &config.trace_options())?;
    std::fs::create_dir_all(out)?;
    let path: Vec<PathRow> = trace
        .branches
        .iter()
        .flat_map(|b| b.points.iter())
        .map(|p| PathRow {
            branch_id: p.branch_id,
            step: p.step,
            theta: p.theta,
            arclen: p.arclen,
            residual_norm: p.residual_norm,
            kkt_residual: p.kkt_residual,
            mutual_information: p.mutual_information,
            objective_f: p.objective_f,
            n_state_groups: p.n_state_groups,
        })
        .collect();
    write_rows(
        &out.join("path.csv"),
        &path,
        &["branch_id", "step", "theta", "arclen", "residual_norm", "kkt_residual", "mutual_information", "objective_f", "n_state_groups"],
    )?;
    let diagram = bifurcation_diagram(&trace);
    if diagram.is_empty() {
        eprintln!("warning: the trace produced no continuation points");
    }
    write_diagram(&out.join("diagram.csv"), &diagram)?;
    let events: Vec<BranchEvent> = trace.events().map(|(branch_id, e)| BranchEvent { branch_id, event: e.clone() }).collect();
    write_json(&out.join("events.json"), &events)?;
    let last = trace
        .branches
        .iter()
        .filter_map(|b| b.points.last())
        .max_by(|a, b| a.theta.total_cmp(&b.theta).then(b.objective_f.total_cmp(&a.objective_f)));
    if let Some(p) = last {
        write_json(&out.join("policy.json"), &PolicyFile::from(&p.policy))?;
    }
    Ok(trace)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleSolution {
    pub theta: f64,
    pub mutual_information: f64,
    pub objective_f: f64,
    pub iterations: usize,
    pub marginal: Vec<f64>,
    pub policy: PolicyFile,
}

/// Blahut-Arimoto solutions for the optimal costs of `model`.
pub fn oracle(model: &MdpModel, thetas: &[f64]) -> Result<Vec<OracleSolution>> {
    let (q, prior) = continuation_problem(model)?;
    thetas
        .iter()
        .map(|&theta| {
            let rate = ExplorationRate::new(theta).map_err(|e| HarnessError::usage(e.to_string()))?;
            let sol = ba_solve(&q, &prior, rate, 1e-13, 1_000_000)?;
            let objective = voi_objective(&q, &sol.policy, &prior, &sol.marginal, rate)?;
            Ok(OracleSolution {
                theta,
                mutual_information: mutual_information(&sol.policy, &prior, &sol.marginal)?,
                objective_f: objective.f,
                iterations: sol.iterations,
                marginal: sol.marginal.probs().iter().copied().collect(),
                policy: PolicyFile::from(&sol.policy),
            })
        })
        .collect()
}

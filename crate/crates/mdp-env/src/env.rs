use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{MdpError, MdpModel, Result, DEFAULT_DISCOUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gridworld,
    RandomMdp,
    Chain,
}

/// Environment kind together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    /// States `0..len`, action 0 moves forward, action 1 moves back.
    /// The last state is an absorbing goal.
    Chain {
        len: usize,
        #[serde(default = "one")]
        step_cost: f64,
        #[serde(default)]
        goal_cost: f64,
    },
    /// Row-major grid, actions up/right/down/left. Start is the top-left
    /// cell, the absorbing goal is the bottom-right cell.
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        obstacle_frac: f64,
        #[serde(default = "one")]
        step_cost: f64,
        /// Probability of slipping to a perpendicular move.
        #[serde(default)]
        slip: f64,
    },
    /// Dense random costs in [0,1) and random sparse kernels.
    RandomMdp {
        n: usize,
        m: usize,
        #[serde(default)]
        sparsity: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl EnvSpec {
    pub fn kind(&self) -> EnvKind {
        match self {
            EnvSpec::Chain { .. } => EnvKind::Chain,
            EnvSpec::Gridworld { .. } => EnvKind::Gridworld,
            EnvSpec::RandomMdp { .. } => EnvKind::RandomMdp,
        }
    }

    pub fn chain(len: usize) -> Self {
        EnvSpec::Chain { len, step_cost: 1.0, goal_cost: 0.0 }
    }

    pub fn gridworld(width: usize, height: usize, obstacle_frac: f64) -> Self {
        EnvSpec::Gridworld { width, height, obstacle_frac, step_cost: 1.0, slip: 0.0 }
    }

    pub fn random_mdp(n: usize, m: usize, sparsity: f64) -> Self {
        EnvSpec::RandomMdp { n, m, sparsity }
    }
}

/// Builds a model. The result is a pure function of `(spec, seed)`.
pub fn build_env(spec: &EnvSpec, seed: u64) -> Result<MdpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *spec {
        EnvSpec::Chain { len, step_cost, goal_cost } => chain(len, step_cost, goal_cost),
        EnvSpec::Gridworld { width, height, obstacle_frac, step_cost, slip } => {
            gridworld(width, height, obstacle_frac, step_cost, slip, &mut rng)
        }
        EnvSpec::RandomMdp { n, m, sparsity } => random_mdp(n, m, sparsity, &mut rng),
    }
}

fn check_cost(name: &str, c: f64) -> Result<()> {
    if c.is_finite() && c >= 0.0 {
        Ok(())
    } else {
        Err(MdpError::Config(format!("{name} must be a finite non-negative cost, got {c}")))
    }
}

fn delta(n: usize, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    row[i] = 1.0;
    row
}

fn chain(len: usize, step_cost: f64, goal_cost: f64) -> Result<MdpModel> {
    if len < 2 {
        return Err(MdpError::Config(format!("chain length must be >= 2, got {len}")));
    }
    check_cost("step_cost", step_cost)?;
    check_cost("goal_cost", goal_cost)?;
    let goal = len - 1;
    let mut cost = Vec::with_capacity(len);
    let mut kernel = Vec::with_capacity(len);
    for s in 0..len {
        if s == goal {
            cost.push(vec![goal_cost; 2]);
            kernel.push(vec![delta(len, s), delta(len, s)]);
        } else {
            cost.push(vec![step_cost; 2]);
            kernel.push(vec![delta(len, s + 1), delta(len, s.saturating_sub(1))]);
        }
    }
    MdpModel::new(cost, kernel, delta(len, 0), vec![goal], DEFAULT_DISCOUNT)
}

const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

fn gridworld<R: Rng>(
    width: usize,
    height: usize,
    obstacle_frac: f64,
    step_cost: f64,
    slip: f64,
    rng: &mut R,
) -> Result<MdpModel> {
    if width == 0 || height == 0 || width * height < 2 {
        return Err(MdpError::Config(format!("gridworld {width}x{height} needs at least two cells")));
    }
    if !(0.0..1.0).contains(&obstacle_frac) {
        return Err(MdpError::Config(format!("obstacle_frac {obstacle_frac} not in [0,1)")));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(MdpError::Config(format!("slip {slip} not in [0,1]")));
    }
    check_cost("step_cost", step_cost)?;
    let n = width * height;
    let (start, goal) = (0, n - 1);
    let mut interior: Vec<usize> = (1..goal).collect();
    let n_obstacles = (obstacle_frac * n as f64).round() as usize;
    let n_obstacles = n_obstacles.min(interior.len());

    // Redraw until the goal is reachable; fall back to no obstacles.
    let mut blocked = vec![false; n];
    for attempt in 0..=100 {
        blocked.iter_mut().for_each(|b| *b = false);
        if attempt < 100 {
            interior.shuffle(rng);
            for &c in &interior[..n_obstacles] {
                blocked[c] = true;
            }
        }
        if reachable(width, height, &blocked, start, goal) {
            break;
        }
    }

    let target = |s: usize, a: usize| -> usize {
        let (r, c) = ((s / width) as isize, (s % width) as isize);
        let (dr, dc) = MOVES[a];
        let (nr, nc) = (r + dr, c + dc);
        if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
            return s;
        }
        let t = nr as usize * width + nc as usize;
        if blocked[t] {
            s
        } else {
            t
        }
    };

    let mut cost = Vec::with_capacity(n);
    let mut kernel = Vec::with_capacity(n);
    for s in 0..n {
        if s == goal {
            cost.push(vec![0.0; 4]);
            kernel.push(vec![delta(n, s); 4]);
            continue;
        }
        cost.push(vec![step_cost; 4]);
        let rows = (0..4)
            .map(|a| {
                let mut row = vec![0.0; n];
                row[target(s, a)] += 1.0 - slip;
                for side in [(a + 1) % 4, (a + 3) % 4] {
                    row[target(s, side)] += slip / 2.0;
                }
                row
            })
            .collect();
        kernel.push(rows);
    }
    MdpModel::new(cost, kernel, delta(n, start), vec![goal], DEFAULT_DISCOUNT)
}

fn reachable(width: usize, height: usize, blocked: &[bool], start: usize, goal: usize) -> bool {
    let mut seen = vec![false; blocked.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(s) = queue.pop_front() {
        if s == goal {
            return true;
        }
        let (r, c) = ((s / width) as isize, (s % width) as isize);
        for (dr, dc) in MOVES {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                continue;
            }
            let t = nr as usize * width + nc as usize;
            if !blocked[t] && !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    false
}

fn random_mdp<R: Rng>(n: usize, m: usize, sparsity: f64, rng: &mut R) -> Result<MdpModel> {
    if n == 0 || m == 0 {
        return Err(MdpError::Config(format!("random_mdp needs n, m >= 1, got n={n}, m={m}")));
    }
    if !(0.0..1.0).contains(&sparsity) {
        return Err(MdpError::Config(format!("sparsity {sparsity} not in [0,1)")));
    }
    let support = (((1.0 - sparsity) * n as f64).round() as usize).clamp(1, n);
    let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen::<f64>()).collect()).collect();
    let mut states: Vec<usize> = (0..n).collect();
    let kernel = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    states.shuffle(rng);
                    let mut row = vec![0.0; n];
                    for &t in &states[..support] {
                        row[t] = rng.gen::<f64>() + 1e-3;
                    }
                    let total: f64 = row.iter().sum();
                    row.iter_mut().for_each(|p| *p /= total);
                    row
                })
                .collect()
        })
        .collect();
    MdpModel::new(cost, kernel, vec![1.0 / n as f64; n], Vec::new(), DEFAULT_DISCOUNT)
}

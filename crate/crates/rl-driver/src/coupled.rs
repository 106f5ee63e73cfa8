use nalgebra::DMatrix;
use voi_core::QTable;

/// Fast (`u`) and slow (`v`) tables of coupled Q-learning, one entry per
/// state-action pair under the one-hot basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TimescalePair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl TimescalePair {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        TimescalePair { u: DMatrix::zeros(n_states, n_actions), v: DMatrix::zeros(n_states, n_actions) }
    }
}

/// One environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub cost: f64,
    pub next_state: usize,
    pub terminal: bool,
}

/// One coupled update at the visited pair. All right-hand sides use the
/// tables from before the update:
///
/// `u <- u + alpha (v - u)`,
/// `v <- v + omega (c + gamma min_b u(s',b) - v)`,
/// `Q <- Q + alpha (c + gamma min_b u(s',b) - v)`.
///
/// Returns the temporal difference `c + gamma min_b u(s',b) - v`.
pub fn coupled_q_update(
    scales: &mut TimescalePair,
    q: &mut QTable,
    t: &Transition,
    alpha: f64,
    omega: f64,
    gamma: f64,
) -> f64 {
    let (s, a) = (t.state, t.action);
    let bootstrap = if t.terminal { 0.0 } else { gamma * scales.u.row(t.next_state).min() };
    let v_old = scales.v[(s, a)];
    let td = t.cost + bootstrap - v_old;
    scales.u[(s, a)] += alpha * (v_old - scales.u[(s, a)]);
    scales.v[(s, a)] += omega * td;
    q.values[(s, a)] += alpha * td;
    td
}

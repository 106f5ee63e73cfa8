use std::path::Path;

use mdp_env::{build_env, EnvSpec, MdpModel};
use nalgebra::DMatrix;
use voi_core::QTable;

use crate::{HarnessError, Result};

/// Reads a model from JSON. Accepts a full model or an environment spec,
/// which is built with `seed`.
pub fn load_model(path: &Path, seed: u64) -> Result<MdpModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::usage(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(model) = MdpModel::from_json(&text) {
        return Ok(model);
    }
    let spec: EnvSpec = serde_json::from_str(&text)
        .map_err(|e| HarnessError::usage(format!("{} is neither a model nor an environment spec: {e}", path.display())))?;
    build_env(&spec, seed).map_err(|e| HarnessError::usage(e.to_string()))
}

/// Optimal expected discounted cost-to-go per state-action pair, by value
/// iteration. Terminal states contribute nothing after arrival.
pub fn optimal_q(model: &MdpModel) -> QTable {
    let (n, m) = (model.n_states, model.n_actions);
    let mut q = DMatrix::<f64>::zeros(n, m);
    let mut value = vec![0.0; n];
    for _ in 0..100_000 {
        let mut change = 0.0f64;
        for s in 0..n {
            for a in 0..m {
                let future: f64 = model.kernel[s][a].iter().zip(&value).map(|(p, v)| p * v).sum();
                let next = model.cost[s][a] + model.discount * future;
                change = change.max((next - q[(s, a)]).abs());
                q[(s, a)] = next;
            }
        }
        for (s, v) in value.iter_mut().enumerate() {
            *v = if model.is_terminal(s) { 0.0 } else { q.row(s).min() };
        }
        if change < 1e-13 {
            break;
        }
    }
    QTable { values: q }
}

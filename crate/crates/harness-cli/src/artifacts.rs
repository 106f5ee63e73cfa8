use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use voi_core::Policy;

use crate::Result;

pub const METRICS_HEADER: [&str; 9] =
    ["episode", "method", "seed", "total_cost", "steps", "theta", "mutual_information", "n_state_groups", "replay_size"];

/// One row of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub method: String,
    pub seed: u64,
    pub total_cost: f64,
    pub steps: usize,
    pub theta: f64,
    pub mutual_information: f64,
    pub n_state_groups: usize,
    pub replay_size: usize,
}

/// One row of a bifurcation diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub theta: f64,
    pub branch_id: usize,
    pub n_state_groups: usize,
}

/// Policy with explicit shape, rows in state order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub probs: Vec<Vec<f64>>,
}

impl From<&Policy> for PolicyFile {
    fn from(p: &Policy) -> Self {
        PolicyFile { n_states: p.n_states(), n_actions: p.n_actions(), probs: (0..p.n_states()).map(|s| p.row(s)).collect() }
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, rows, &METRICS_HEADER)
}

pub fn write_diagram(path: &Path, rows: &[DiagramRow]) -> Result<()> {
    write_rows(path, rows, &["theta", "branch_id", "n_state_groups"])
}

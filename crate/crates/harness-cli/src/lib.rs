//! Experiment orchestration for value-of-information exploration: run
//! configuration, training across methods and seeds, continuation traces,
//! metrics files, method comparison and SVG plots.

pub mod artifacts;
mod config;
mod error;
pub mod experiment;
pub mod model;
pub mod plot;
pub mod report;

pub use config::{ReportSection, RunConfig, TraceSection};
pub use error::{HarnessError, Result};

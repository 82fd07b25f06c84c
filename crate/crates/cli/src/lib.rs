//! Experiment runner for the bplight simulator: training and inference
//! runs, parameter sweeps, noise audits and performance reports, with
//! deterministic JSON records and CSV aggregates.

pub mod checkpoint;
pub mod error;
pub mod record;
pub mod runner;
pub mod spec;
pub mod sweep;

pub use error::{CliError, Result};

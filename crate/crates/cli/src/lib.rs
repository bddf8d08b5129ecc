//! Experiment harness: simulate datasets, train, evaluate and report.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod manifest;
pub mod preview;
pub mod report;
pub mod simulate;
pub mod train;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

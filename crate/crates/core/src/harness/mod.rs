//! Run configuration, file formats, simulation helpers and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;

pub use cli::run_cli;
pub use config::{CrbSweep, MetricConfig, RunConfig};

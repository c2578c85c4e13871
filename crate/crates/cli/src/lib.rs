//! Command-line front end: run configuration, metrics files and the
//! `rova` subcommands.

pub mod app;
pub mod commands;
pub mod config;
pub mod metrics;

pub use commands::{CliError, CliResult};
pub use config::RunConfig;
pub use metrics::{MetricsRecord, MetricsWriter};

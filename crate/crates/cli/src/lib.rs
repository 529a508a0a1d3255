//! Library side of the `fedround` command: configuration, run directories,
//! manifests and comparison reports.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

pub use commands::RunOutcome;
pub use config::RunConfig;
pub use error::{CliError, Result};

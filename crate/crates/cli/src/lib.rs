//! Batch front end: configuration, orchestration and output files.

pub mod config;
pub mod error;
pub mod files;
pub mod run;

pub use config::{parse_config, Args, RunConfig};
pub use error::CliError;
pub use run::{cost_only, run, RunReport};

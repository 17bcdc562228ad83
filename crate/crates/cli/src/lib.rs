//! Configuration, orchestration and output for the `risklab` command-line tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod ratefit;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use ratefit::RateFit;

//! Command-line front end for GEM models: training, prediction,
//! evaluation, hyperparameter search and detector export.

pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod output;

pub use error::{CliError, CliResult};

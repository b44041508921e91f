//! Command-line orchestration for training and evaluating Hilbert–Galerkin critics.

pub mod commands;
pub mod config;
pub mod error;
pub mod probes;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

//! Experiment runner for the `wola-core` simulator: TOML configs, CSV
//! datasets, result files and the commands behind the `wola` binary.

pub mod bound;
pub mod config;
pub mod dataset;
mod error;
pub mod experiment;
pub mod fig1;
pub mod sweep;

pub use error::{Result, SimError};

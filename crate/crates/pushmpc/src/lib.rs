//! Experiment driver for MPC-based planar pushing: data generation, GP
//! training, closed-loop tracking runs and the training-size sweep.
//!
//! The numerics live in `pushmpc-core`; this crate adds configuration,
//! file formats and the `pushmpc` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use config::{ControllerKind, ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};

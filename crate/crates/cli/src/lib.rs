//! Experiment sweeps and diagnostics behind the `lodlab` binary.

pub mod config;
pub mod diagnose;
pub mod sweep;

pub use config::{Experiment, ExperimentConfig, KSpec};
pub use diagnose::{diagnose, Diagnostics};
pub use sweep::{run, Report, Row};

//! Experiment runner for the driftlab simulation core.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod reports;

pub use config::{ExperimentConfig, Stage};
pub use error::RunError;
pub use pipeline::{run, Options, Outcome, Target};

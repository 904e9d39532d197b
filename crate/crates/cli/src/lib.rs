//! Command-line driver for rmf-core: configuration, dispatch and output files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::execute;
pub use config::{Command, ConfigError, ExperimentConfig, PhiSpec};
pub use output::{write_outputs, Report, Verdict};

//! Experiment runner for the fedsim simulator: JSON configuration,
//! centralized and federated runs, and report files.

pub mod config;
pub mod report;
pub mod runner;
pub mod svg;

pub use config::{load_config, ConfigError, ExperimentConfig, Mode};
pub use report::ExperimentReport;
pub use runner::{execute, run, write_outputs, RunError, RunResult};
pub use svg::emit_svg;

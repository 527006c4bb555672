//! Seeded, config-driven experiment runners and their metric files.
//!
//! A run is fully determined by its [`ExperimentConfig`]: data, parameter
//! initialization and sampling each draw from their own stream of the seed.
//! With `timing` off (the default) two runs of the same config write
//! byte-identical metric files.

mod config;
mod metrics;
mod runner;

pub use config::{ExperimentConfig, ExperimentKind};
pub use metrics::{read_metrics, MetricFormat, MetricRow, MetricWriter, CSV_HEADER};
pub use runner::{run, run_collect, run_to_file, PERM_TABLE_ROWS};

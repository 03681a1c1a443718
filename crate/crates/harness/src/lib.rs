//! Experiment plumbing around `rtb-core`: configuration files, seeded
//! batches, across-seed aggregation and CSV output.

pub mod batch;
pub mod config;
pub mod output;
pub mod stats;

pub use batch::{run_batch, BatchError, BatchResult, RunKey, RunSummary};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use output::{aggregate, emit_summary, Aggregates};
pub use stats::fairness_metrics;

use std::path::Path;

/// Runs a batch and writes all per-run and summary files under `out`.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<(BatchResult, Aggregates), BatchError> {
    let result = run_batch(config, out)?;
    let aggregates = aggregate(&result, &config.densities, &config.schemes);
    emit_summary(&aggregates, out)?;
    Ok((result, aggregates))
}

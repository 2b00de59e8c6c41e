//! Experiment runner for the `fedlab` laboratory: configuration, stage
//! pipeline, sweeps, reports and replay.

pub mod config;
mod error;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Stage};
pub use error::{CliError, CliResult};
pub use pipeline::{replay, run_experiment, run_stages, RunDir};
pub use report::{emit_report, Format};

/// Environment variable that sizes the worker pool.
pub const WORKERS_ENV: &str = "FEDLAB_WORKERS";

/// Applies [`WORKERS_ENV`] if set. Returns the requested size.
pub fn configure_workers_from_env() -> CliResult<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::config(WORKERS_ENV, format!("expected a positive integer, got {v:?}")))?;
            fedlab::exec::configure_workers(n);
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

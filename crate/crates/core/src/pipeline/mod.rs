//! End-to-end runs: retrieve → re-rank → register → evaluate, and the
//! re-ranking benchmark.

mod config;
mod render;
mod run;

use thiserror::Error;

pub use config::{
    parse_assignments, parse_world_config, read_config_text, Assignment, ConfigError, Precision, RunConfig,
};
pub use render::{render_bench_table, render_results};
pub use run::{bench_dataset, cmd_bench, cmd_run, cmd_synth, evaluate_query, run_dataset, QueryContext};

use crate::metrics::MetricsError;
use crate::retrieval::RetrievalError;
use crate::storage::StorageError;
use crate::synthgen::SynthError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl PipelineError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Synth(SynthError::InvalidConfig(_)) => 1,
            _ => 2,
        }
    }
}

//! Experiment configuration, Monte Carlo orchestration and persisted artifacts.
//!
//! A run produces, in the output directory:
//!
//! * `trace_<algorithm>.csv`: `k,run_seed,dist_to_ne,consensus_error,budget_spent`, runs stacked;
//! * `aggregate.csv`: `k,algorithm,mean_err,var_err,mean_consensus,n_effective`;
//! * `ledger.json`: one budget ledger per algorithm plus per-algorithm summaries;
//! * `manifest.json`: the resolved config with game and graph inlined, which
//!   can be fed back to reproduce every output byte.

use std::path::PathBuf;

use thiserror::Error;

use crate::algorithms::AlgorithmError;
use crate::game::GameError;
use crate::graph::GraphError;
use crate::privacy::PrivacyError;

mod config;
mod run;

pub use config::{
    resolve_config, validate_config, Diagnostic, EpsilonTarget, ExperimentConfig, GameSource,
    GraphSource, Overrides, ResolvedExperiment, ScheduleConfig, SCHEMA,
};
pub use run::{
    aggregate_path, budget_table, initial_state, run_experiment, run_init_seed, run_noise,
    trace_path, AggregateResult, AggregateRow, AlgorithmSummary, BudgetRow, RunSettings, TraceRow,
    Welford,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{}", .0.iter().map(|d| format!("  - {d}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<Diagnostic>),
    #[error("equilibrium oracle failed: {0}")]
    Oracle(GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Algorithm(#[from] AlgorithmError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("no gradient bound: set c_bar or use a boxed game")]
    NoGradientBound,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::NoGradientBound => 1,
            _ => 2,
        }
    }
}

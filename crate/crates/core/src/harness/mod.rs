//! Configuration, multi-seed experiments, sweeps and run comparison.

mod config;
mod experiment;
mod report;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    parse_pairs, resolve_output, ConfigError, ExperimentConfig, LrSteps, OUTPUT_ROOT_ENV,
    REQUIRED_KEYS,
};
pub use experiment::{
    build_problem, dump_dataset, metrics_file, run_experiment, run_experiment_in, run_seed,
    trace_file, verify_experiment_in, ExperimentSummary, MeanStd, SeedSummary, SeedVerification,
    CONFIG_ECHO_FILE, SUMMARY_FILE,
};
pub use report::{compare_report, load_summary, ComparisonRow, ComparisonTable};
pub use sweep::{expand, run_sweep, Vary};

use crate::engine::EngineError;
use crate::problems::ProblemError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("seed {seed}: {source}")]
    Run {
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("run directory {} does not exist", .0.display())]
    MissingRun(PathBuf),
    #[error("runs are not comparable: {0}")]
    Incomparable(String),
}

impl HarnessError {
    /// Whether the failure is a problem with the configuration rather than a
    /// runtime fault.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Setup(_)
                | Self::Problem(ProblemError::InvalidSpec(_))
                | Self::Run {
                    source: EngineError::InvalidConfig(_),
                    ..
                }
        )
    }
}

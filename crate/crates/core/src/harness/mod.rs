//! Experiment orchestration: configuration, seed fan-out, persistence and
//! reports.
//!
//! An [`ExperimentConfig`] describes one ensemble. [`run_ensemble`] runs its
//! seeds in parallel and returns one [`RunOutcome`] per seed in seed order;
//! [`EnsembleReport::build`] folds the outcomes into estimators. Outcomes
//! hold only compact per-run summaries (drift snapshots, partial sums,
//! stopping times, final Ψ), so reports can be recomputed from persisted
//! [`RunLog`]s without re-simulating.

pub mod config;
pub mod report;
pub mod runlog;
pub mod runner;
pub mod svg;

pub use config::{ExperimentConfig, ExperimentKind, Horizons, InitConfig, ResolvedHorizons, StagnationSettings};
pub use report::{EnsembleReport, ReportFiles};
pub use runlog::{load_runlog, load_runlogs, persist_runlog, RunLog, FORMAT_VERSION};
pub use runner::{run_ensemble, run_single, RunOutcome};

use crate::engine::EngineError;
use crate::estimators::EstimatorError;
use crate::lemma_checks::LemmaError;
use crate::numerics::NumericsError;
use crate::objectives::ObjectiveError;
use crate::potential::PotentialError;
use crate::stagnation::StagnationError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("corrupt run log: {0}")]
    CorruptLog(String),
    #[error("run log format {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("run with seed {seed} never kept its stagnating dimensions below the threshold")]
    ScaleExhausted { seed: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Stagnation(#[from] StagnationError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Lemma(#[from] LemmaError),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Stagnation(StagnationError::InvalidConfig(_))
            | HarnessError::Objective(_)
            | HarnessError::Engine(EngineError::InvalidParams(_) | EngineError::IndexOutOfRange(_)) => 1,
            _ => 2,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "json",
            HarnessError::Csv(_) => "csv",
            HarnessError::CorruptLog(_) => "corrupt_log",
            HarnessError::VersionMismatch { .. } => "version_mismatch",
            HarnessError::ScaleExhausted { .. } => "scale_exhausted",
            HarnessError::Engine(_) => "engine",
            HarnessError::Numerics(_) => "numerics",
            HarnessError::Objective(_) => "objective",
            HarnessError::Potential(_) => "potential",
            HarnessError::Stagnation(_) => "stagnation",
            HarnessError::Estimator(_) => "estimator",
            HarnessError::Lemma(_) => "lemma",
        }
    }
}

//! Batch experiment runner for constant-step stochastic gradient methods.
//!
//! A run reads an [`ExperimentConfig`], builds the problem and scheme,
//! simulates the replications, evaluates the requested checks and writes
//! `ensemble.csv`, `audit.csv`, `growth.txt`, `summary.txt` and
//! `manifest.json` into `<output root>/<experiment name>/`.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;

use thiserror::Error;

pub use config::{Check, ExperimentConfig};
pub use experiment::{
    run_experiment, run_with_threads, CheckResult, CheckStatus, ExperimentOutcome,
};

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const CHECKS_FAILED: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const PROBLEM: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("problem construction failed: {0}")]
    Problem(String),
    #[error("run diverged: {0}")]
    Diverged(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            CliError::Problem(_) => exit_code::PROBLEM,
            CliError::Diverged(_) => exit_code::DIVERGED,
            CliError::Io(_) => exit_code::IO,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<constep::solvers::SolverError> for CliError {
    fn from(e: constep::solvers::SolverError) -> Self {
        use constep::solvers::SolverError;
        match e {
            SolverError::Diverged { .. } | SolverError::NonFinite { .. } => {
                CliError::Diverged(e.to_string())
            }
            other => CliError::Problem(other.to_string()),
        }
    }
}

impl From<constep::problems::ProblemError> for CliError {
    fn from(e: constep::problems::ProblemError) -> Self {
        use constep::problems::ProblemError;
        match e {
            ProblemError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Problem(other.to_string()),
        }
    }
}

impl From<constep::geometry::GeometryError> for CliError {
    fn from(e: constep::geometry::GeometryError) -> Self {
        CliError::Problem(e.to_string())
    }
}

impl From<constep::growth::GrowthError> for CliError {
    fn from(e: constep::growth::GrowthError) -> Self {
        use constep::growth::GrowthError;
        match e {
            GrowthError::Solver(s) => s.into(),
            GrowthError::Problem(p) => p.into(),
            other => CliError::Problem(other.to_string()),
        }
    }
}

impl From<constep::analysis::AnalysisError> for CliError {
    fn from(e: constep::analysis::AnalysisError) -> Self {
        use constep::analysis::AnalysisError;
        match e {
            AnalysisError::Solver(s) => s.into(),
            other => CliError::Problem(other.to_string()),
        }
    }
}

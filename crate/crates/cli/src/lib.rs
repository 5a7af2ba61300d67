//! File formats, experiment sweeps and the `mdp-metrics` command line.
//!
//! The numerical work lives in the `mdp-metrics` crate; this crate reads and
//! writes MDP documents and CSV outputs and wires the pipeline
//! `gen -> solve -> metric -> aggregate -> bounds -> experiment`.

// `!(x <= y)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod experiment;
pub mod format;

pub use format::FormatError;

use experiment::SweepError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Core(#[from] mdp_metrics::Error),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("bound violated: {0}")]
    BoundViolated(String),
}

impl CliError {
    /// 1 usage, 2 validation, 3 certificate or bound failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Format(_) => 2,
            CliError::Core(e) | CliError::Sweep(SweepError::Core(e)) => core_exit_code(e),
            CliError::Sweep(SweepError::Invariant { .. }) | CliError::BoundViolated(_) => 3,
        }
    }
}

fn core_exit_code(e: &mdp_metrics::Error) -> i32 {
    use mdp_metrics::Error::*;
    match e {
        InvalidParameter(_) | BoundPrecondition(_) => 1,
        Certification(_) | CapReached { .. } => 3,
        Dimension { .. } | Validation(_) | InvalidPartition(_) | InvalidMetric(_) => 2,
    }
}

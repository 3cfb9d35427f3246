use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
///
/// The variants are grouped into the classes the command-line tool maps to
/// exit codes: input parsing, design validation, infeasible programs, and
/// solver failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("unsupported running-variable dimension {0} (only 1 or 2 are supported)")]
    UnsupportedDimension(usize),

    #[error("invalid design: {0}")]
    Design(String),

    #[error("treatment indicator disagrees with the assignment rule at rows {rows:?}")]
    Sharpness { rows: Vec<usize> },

    #[error("infeasible program: constraint `{constraint}` cannot be satisfied")]
    Infeasible { constraint: String },

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("bandwidth {bandwidth} leaves fewer than two support points on the {side} side")]
    Bandwidth { bandwidth: f64, side: &'static str },

    #[error("first-stage denominator {0:.4} is too close to zero")]
    WeakDenominator(f64),

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("solution quality: {0}; try tighter solver tolerances")]
    SolverQuality(String),
}

impl Error {
    pub(crate) fn infeasible(constraint: impl Into<String>) -> Self {
        Error::Infeasible {
            constraint: constraint.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

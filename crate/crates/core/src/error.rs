use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("privacy budget overflow: delta {delta} >= 1")]
    BudgetOverflow { delta: f64 },

    /// The private quantile needs `level > 2 / (n * epsilon)`.
    #[error(
        "infeasible level {level} for n = {n}, epsilon = {epsilon}: need level > {threshold} \
         (n >= {min_n} at this epsilon, or epsilon >= {min_epsilon} at this n)"
    )]
    InfeasibleLevel {
        level: f64,
        n: usize,
        epsilon: f64,
        threshold: f64,
        min_n: usize,
        min_epsilon: f64,
    },

    #[error("invalid miscoverage level: alpha = {alpha} must exceed delta = {delta}")]
    InvalidLevel { alpha: f64, delta: f64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("plan error: {0}")]
    Plan(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

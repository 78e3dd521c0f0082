use std::path::PathBuf;

use thiserror::Error;

use crate::manifold::ParameterPoint;
use crate::optim::OptimizerReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter point: {0}")]
    InvalidPoint(String),

    #[error("vector is not tangent at the base point: {0}")]
    NotTangent(String),

    /// The retraction left the manifold (scatter not SPD or a texture became
    /// non-positive). Distinct from [`Error::InvalidPoint`] so that line
    /// searches can shrink the step and retry.
    #[error("step t = {t:e} is infeasible: {reason}")]
    StepTooLarge { t: f64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("line search stalled at iteration {iteration} (gradient norm {grad_norm:e})")]
    Stalled {
        iteration: usize,
        grad_norm: f64,
        best: Box<ParameterPoint>,
        report: Box<OptimizerReport>,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        mu: nalgebra::DVector<f64>,
        sigma: nalgebra::DMatrix<f64>,
    },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("batch {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics (stalls, degenerate data,
    /// infeasible steps) rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Stalled { .. }
            | Error::NotConverged { .. }
            | Error::DegenerateData(_)
            | Error::StepTooLarge { .. }
            | Error::Sampling(_) => true,
            Error::Batch { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

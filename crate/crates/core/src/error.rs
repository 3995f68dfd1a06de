use thiserror::Error;

use crate::scheme::SchemeResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("function `{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("evaluation failed at ({}, {}): {message}", point[0], point[1])]
    Evaluation { point: [f64; 2], message: String },

    #[error("malformed problem: {0}")]
    MalformedSpec(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("interior subdomain with margin {margin} is empty")]
    EmptySubdomain { margin: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("Newton did not converge at delta = {delta:e} after {} iterations (last residual {:e})", residuals.len(), residuals.last().copied().unwrap_or(f64::NAN))]
    NewtonNonConvergence { delta: f64, residuals: Vec<f64> },

    #[error("linear solve failed: {0}")]
    LinearSolver(String),

    #[error("fixed-point iteration did not converge after {} iterations (last change {:e})", changes.len(), changes.last().copied().unwrap_or(f64::NAN))]
    FixedPointNonConvergence { changes: Vec<f64> },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("oracle found two distinct roots at sup-distance {distance:e}")]
    UniquenessViolation { distance: f64 },

    #[error("scheme aborted at n = {n}: {cause}")]
    SchemeAborted {
        n: u64,
        cause: Box<Error>,
        partial: Box<SchemeResult>,
    },

    #[error("config error at {section}.{key}: {message}")]
    Config {
        section: String,
        key: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(section: &str, key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            section: section.to_string(),
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors raised by one of the iterative solvers.
    pub fn is_nonconvergence(&self) -> bool {
        match self {
            Error::NewtonNonConvergence { .. }
            | Error::FixedPointNonConvergence { .. }
            | Error::LinearSolver(_) => true,
            Error::SchemeAborted { cause, .. } => cause.is_nonconvergence(),
            _ => false,
        }
    }
}

use std::path::PathBuf;

use graphpae_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{what} index {index} out of range (bound {bound})")]
    Range {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("eigensolver did not converge: {converged}/{requested} pairs, worst residual {residual:.3e}")]
    NoConvergence {
        requested: usize,
        converged: usize,
        residual: f64,
    },
    #[error("non-finite {component} loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, component: &'static str },
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Argument,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_) | Error::Contract(_) => ErrorClass::Argument,
            Error::NoConvergence { .. } | Error::NonFiniteLoss { .. } => ErrorClass::Numerical,
            Error::Tensor(TensorError::Shape { .. }) => ErrorClass::Argument,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

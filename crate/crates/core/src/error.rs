use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("branch {0} has zero series impedance")]
    SingularBranch(usize),

    #[error("dataset rejected: {rejected} of {total} power-flow solves did not converge")]
    Dataset { rejected: usize, total: usize },

    #[error("power flow did not converge: {0}")]
    Divergence(String),

    #[error("covariance matrix is not positive definite (last jitter {jitter:e})")]
    Conditioning { jitter: f64 },

    #[error("log marginal likelihood is not finite at the initial hyperparameters")]
    Initialization,

    #[error("source registry: {0}")]
    Registry(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.to_string(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Dataset { .. }
                | Error::Divergence(_)
                | Error::Conditioning { .. }
                | Error::Initialization
        )
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}

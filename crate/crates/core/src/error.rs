//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration file could not be read, parsed, or validated.
    #[error("config error: {0}")]
    Config(String),

    /// An input violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Covariance matrix failed the positive semi-definite check.
    #[error("covariance is not positive semi-definite: eigenvalue {index} is {value:.6e}")]
    NotPsd { index: usize, value: f64 },

    /// Feature dimensions disagree between datasets or model.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Gradient descent produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    /// A quantity left its mathematical domain (e.g. 0 raised to a negative power).
    #[error("domain error: {0}")]
    Domain(String),

    /// Brute-force enumeration was asked for more than it can do.
    #[error("enumeration cap exceeded: {0}")]
    EnumerationCap(String),

    /// The coalition solver hit its iteration cap without stabilizing.
    #[error("solver did not stabilize within {max_iters} iterations ({accepted} switches accepted)")]
    NonConvergence { max_iters: usize, accepted: usize },

    /// I/O failure, annotated with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

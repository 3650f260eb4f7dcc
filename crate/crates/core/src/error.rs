use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iteration failed to converge, stalled, or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A requested evaluation falls outside the data it is defined on.
    #[error("range error: {0}")]
    Range(String),

    /// The field is too narrow for the grid; a finer grid is needed.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A right-hand side is not orthogonal to the operator kernel.
    #[error("orthogonality error: <rhs, kernel[{index}]> = {inner:e} exceeds {tol:e}")]
    Orthogonality { index: usize, inner: f64, tol: f64 },

    /// The maximum of |u| sits on the edge of the domain.
    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    /// The overlap of two fields vanishes, so no phase can be chosen.
    #[error("phase alignment undefined: overlap {0:e}")]
    AlignmentUndefined(f64),

    /// The minimizer is not in the blow-up regime (mu >= 0).
    #[error("not in the blow-up regime: mu = {0}")]
    NotBlowup(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}

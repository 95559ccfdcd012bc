use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DoaError {
    /// An argument or configuration value is outside the accepted domain.
    #[error("{0}")]
    Domain(String),

    /// A subspace basis is too ill-conditioned to invert.
    #[error("degenerate subspace: {0}")]
    DegenerateSubspace(String),

    /// An iterative decomposition failed to converge or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Wav { path: PathBuf, message: String },
}

impl DoaError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        DoaError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, DoaError>;

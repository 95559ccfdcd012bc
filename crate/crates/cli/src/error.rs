use std::path::PathBuf;

use thiserror::Error;
use wideband_doa::DoaError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit status: 2 validation, 3 I/O, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<DoaError> for CliError {
    fn from(e: DoaError) -> Self {
        match e {
            DoaError::Domain(msg) => CliError::Validation(msg),
            DoaError::DegenerateSubspace(_) | DoaError::Numerical(_) => CliError::Numerical(e.to_string()),
            DoaError::Io { path, source } => CliError::Io { path, source },
            DoaError::Wav { path, message } => {
                CliError::Io { path, source: std::io::Error::new(std::io::ErrorKind::InvalidData, message) }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

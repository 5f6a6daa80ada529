use std::io;
use std::path::PathBuf;

/// Failures of the lab layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// A spec or vector file did not parse.
    #[error("{source_name}:{line}: {message}")]
    Spec {
        /// File name or bundled spec name.
        source_name: String,
        /// 1-based line.
        line: usize,
        /// What was wrong.
        message: String,
    },
    /// Parsed but inconsistent input (bad value combination, missing column, ...).
    #[error("{0}")]
    Invalid(String),
    /// Rejected by the core library.
    #[error(transparent)]
    Core(#[from] sawtooth_core::Error),
    /// Filesystem or stream failure.
    #[error("{}: {source}", path.display())]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying error.
        source: io::Error,
    },
}

impl LabError {
    /// 2 for input errors, 3 for IO errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Io { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        LabError::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, err: csv::Error) -> Self {
        let path = path.into();
        if err.is_io_error() {
            match err.into_kind() {
                csv::ErrorKind::Io(e) => LabError::io(path, e),
                _ => unreachable!(),
            }
        } else {
            LabError::Invalid(format!("{}: {err}", path.display()))
        }
    }
}

/// Lab result alias.
pub type Result<T> = std::result::Result<T, LabError>;

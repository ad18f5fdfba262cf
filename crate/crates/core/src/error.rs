use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("{what} not found: {}", path.display())]
    NotFound { what: String, path: PathBuf },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    ParseCell { row: usize, column: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("single-class dataset")]
    SingleClass,

    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid model document: {0}")]
    Model(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Usage(_) | Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::Numerical(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

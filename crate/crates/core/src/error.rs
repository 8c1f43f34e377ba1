use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ZslError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ZslError {
    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: ragged row, expected {expected} columns but found {found}", path.display())]
    RaggedRow {
        path: PathBuf,
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("{}:{line}: unknown class `{class}`", path.display())]
    UnknownClass {
        path: PathBuf,
        line: u64,
        class: String,
    },

    #[error("{}:{line}: non-finite value", path.display())]
    NonFiniteInput { path: PathBuf, line: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty class {0}: no instances to estimate a signature from")]
    EmptyClass(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("covariance is not positive definite{}", class.map(|c| format!(" (class {c})")).unwrap_or_default())]
    NotPositiveDefinite { class: Option<usize> },

    #[error("sparse code is all zero; no seen signature to transfer")]
    DegenerateCode,

    #[error("synthetic generation infeasible: {0}")]
    Infeasible(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ZslError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZslError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a class id to a positive-definiteness failure.
    pub fn with_class(self, class: usize) -> Self {
        match self {
            ZslError::NotPositiveDefinite { class: None } => {
                ZslError::NotPositiveDefinite { class: Some(class) }
            }
            other => other,
        }
    }
}

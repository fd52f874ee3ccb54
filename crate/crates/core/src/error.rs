use std::path::PathBuf;

use crate::solvers::SolverError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at line {line}: {message}")]
    Format { line: u64, message: String },

    #[error("duplicate sample ({identity}, {sample})")]
    DuplicateSample { identity: String, sample: String },

    #[error("cannot l2-normalize a zero vector")]
    ZeroVector,

    #[error("degenerate min/max range on element {index}")]
    DegenerateRange { index: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty embedding set")]
    EmptySet,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("key invariant violated: {0}")]
    Invariant(String),

    #[error("keys do not match template: {0}")]
    KeyMismatch(String),

    #[error("protected template for subject {0} is the zero vector")]
    ZeroTemplate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("no acceptable keys for subject {subject} after {attempts} attempts")]
    KeySelectionExhausted { subject: String, attempts: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: u64, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn from_csv(path: &std::path::Path, err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(source) => Error::io(path, source),
            other => Error::format(line, format!("{other:?}")),
        }
    }
}

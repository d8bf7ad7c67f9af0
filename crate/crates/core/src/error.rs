use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("invalid range: {0}")]
    Range(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{path}: bad magic, not a {expected} file")]
    Format {
        path: PathBuf,
        expected: &'static str,
    },

    #[error("{path}: corrupt file: {detail}")]
    Corrupt { path: PathBuf, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("training diverged: non-finite loss in epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("activation set is already pooled; per-token rows are required")]
    AlreadyPooled,

    #[error("activation set is pooled; token-level reports need per-token rows")]
    NeedsTokens,

    #[error("activation set carries no token strings")]
    MissingTokens,

    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("layer pairing failed: {0}")]
    Pairing(String),

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("need at least 2 samples for variance, got {0}")]
    InsufficientSamples(usize),

    #[error("degenerate vector: norm {norm:e} below 1e-12")]
    Degenerate { norm: f64 },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 validation, 2 I/O, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Divergence { .. } => 3,
            _ => 1,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("unsupported loss kind {0} (vector-valued)")]
    UnsupportedKind(String),

    #[error("filter state poisoned: {0}")]
    PoisonedState(String),

    #[error("at sample {index}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}: {message}")]
    Schema { path: PathBuf, row: usize, message: String },

    #[error("trial has {len} samples, window needs {needed}")]
    TrialTooShort { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid model graph: {0}")]
    Graph(String),

    #[error("weight `{name}`: {message}")]
    Weights { name: String, message: String },

    #[error("model has {params} parameters, finite-difference trainer cap is {cap}")]
    UnsupportedScale { params: usize, cap: usize },

    #[error("no usable learning rate: every probe loss was non-finite")]
    NoUsableLr,

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

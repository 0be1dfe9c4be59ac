use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("empty trace")]
    EmptyTrace,

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("sequence {index} has {len} frames, fewer than the {n_states} states")]
    SequenceTooShort {
        index: usize,
        len: usize,
        n_states: usize,
    },

    #[error("class {0:?} has no training sample long enough for the model topology")]
    InadmissibleClass(String),

    #[error("no training data")]
    NoData,

    #[error("split selects nothing: {0}")]
    EmptySplit(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("pipeline config hash mismatch: bundle {expected}, input {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("length mismatch: {0} truths, {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

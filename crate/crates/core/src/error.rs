use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileMissing(PathBuf),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("unknown corpus format `{0}`")]
    UnknownFormat(String),

    #[error("duplicate instance id `{0}` within split")]
    DuplicateId(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("label class {0:?} has no instances")]
    EmptyClass(Label),

    #[error("post is empty")]
    EmptyPost,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input is empty")]
    Empty,

    #[error("input is empty after tokenization")]
    EmptyAfterTokenization,

    #[error("explanation has no tokens")]
    EmptyExplanation,

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("not enough pairable values: {0}")]
    InsufficientPairableData(String),

    #[error("checkpoint not found: {0}")]
    CheckpointNotFound(String),

    #[error("bundle at {} is a {found} bundle, expected {expected}", path.display())]
    WrongBundleKind {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("teacher weights changed during student training")]
    TeacherMutated,

    #[error("scorer `{name}` failed: {reason}")]
    Scorer { name: String, reason: String },

    #[error("item {index}: {source}")]
    Item {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("tensor error: {0}")]
    Tensor(#[from] candle_core::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileMissing(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}

pub(crate) fn check_same_len(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("materialization needs {needed} bytes, budget is {budget} bytes")]
    TooLarge { needed: u128, budget: u128 },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {path}: need {needed} bytes, have {have}")]
    IdxTruncated {
        path: PathBuf,
        needed: usize,
        have: usize,
    },

    #[error("IDX file {path} has {extra} trailing bytes")]
    IdxTrailing { path: PathBuf, extra: usize },

    #[error("IDX count mismatch: {images} images but {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

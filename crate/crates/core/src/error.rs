use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fault spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("healthy recording has {available} samples, need at least {needed}")]
    InsufficientNoise { needed: usize, available: usize },

    #[error("class {class}: requested {requested} samples, only {available} available")]
    InsufficientData { class: usize, requested: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("signal of length {len} cannot hold a window of length {window}")]
    EmptyResult { len: usize, window: usize },

    #[error("degenerate weights: {0}")]
    DegenerateWeights(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("no Nemenyi critical value tabulated for {methods} methods at alpha = {alpha}")]
    UnsupportedMethods { methods: usize, alpha: f64 },

    #[error("key `{0}` not found")]
    KeyNotFound(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        history: Box<crate::train::TrainHistory>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Maps `NotFound` I/O failures onto [`Error::FileNotFound`] so callers see the path.
    pub(crate) fn io_at(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        if err.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path.into())
        } else {
            Error::Io(err)
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model has no rules")]
    EmptyModel,

    #[error("non-finite value in input feature {index}")]
    NonFiniteInput { index: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),

    #[error("stream is empty")]
    EmptyStream,

    #[error("every sample was rejected ({seen} seen)")]
    NothingTrained { seen: u64 },

    #[error("cannot split {n_samples} samples into {partitions} partitions")]
    InvalidPartitioning { n_samples: usize, partitions: usize },

    #[error("partition {partition} failed: {source}")]
    PartitionFailed {
        partition: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("k = {k} exceeds the {available} available rules")]
    KTooLarge { k: usize, available: usize },

    #[error("cannot merge rules with zero total population")]
    ZeroPopulation,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }
}

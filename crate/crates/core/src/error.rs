use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid execution profile: {0}")]
    InvalidProfile(String),

    #[error("invalid task set: {0}")]
    InvalidTaskSet(String),

    #[error("partition count {mu} outside 1..={n_partitions}")]
    PartitionOutOfRange { mu: usize, n_partitions: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("instance too large for exhaustive search: {0}")]
    OracleTooLarge(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

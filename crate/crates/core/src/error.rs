use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent model / experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the domain of a function (negative distance, coincident points, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("partition mismatch: `{left}` vs `{right}`")]
    PartitionMismatch { left: String, right: String },

    #[error("point {index} at {location:?} (power {power}) lies outside the partition")]
    OutsidePartition {
        index: usize,
        location: Vec<f64>,
        power: f64,
    },

    #[error("instance has {pairs} pairs; exhaustive enumeration is capped at {max}")]
    InstanceTooLarge { pairs: usize, max: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/layer shape violations.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// API contract violations (e.g. backward on a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),
    /// Spatial query violations (e.g. k larger than the reference set).
    #[error("query error: {0}")]
    Query(String),
    /// Training-time numeric failures.
    #[error("training error: {0}")]
    Train(String),
    /// Malformed files or mismatched artifacts.
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

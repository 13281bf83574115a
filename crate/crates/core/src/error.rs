//! Crate-wide error type and process exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Bad user-supplied value (negative speed, malformed flag, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Inconsistent or impossible configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Degenerate geometry input (too few points, collinear set, ...).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Malformed or inconsistent data files.
    #[error("data error: {0}")]
    Data(String),

    /// An internal API was called outside its contract.
    #[error("contract error: {0}")]
    Contract(String),

    /// NaN/Inf appeared where finite values are required, or training diverged.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code per the CLI contract: 2 validation, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_)
            | Error::Validation(_)
            | Error::Config(_)
            | Error::Geometry(_)
            | Error::Contract(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

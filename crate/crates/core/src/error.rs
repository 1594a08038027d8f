//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or mesh was requested with an impossible shape (zero extent, odd rotary width, ...).
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// Operand extents do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A caller broke an API contract (non-scalar loss, out-of-range frame index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("parse error at {file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    /// A surface point projected to z <= 0 during silhouette rasterization.
    #[error("point behind camera at frame {frame}")]
    BehindCamera { frame: usize },

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("point is behind the camera (posed depth {depth})")]
    BehindCamera { depth: f64 },

    #[error("scene produced no visible geometry")]
    DegenerateScene,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

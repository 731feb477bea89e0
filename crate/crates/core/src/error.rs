use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid view direction: norm {norm} is not 1")]
    InvalidDirection { norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("image of {width}x{height} is smaller than the {window}x{window} SSIM window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("negative radiance {value} at element {index}")]
    NegativeRadiance { index: usize, value: f64 },

    #[error("non-finite {what} in gaussian {index}")]
    NonFiniteGaussian { index: usize, what: &'static str },

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: &'static str },

    #[error("non-finite loss at iteration {iteration} (view {view})")]
    NonFiniteLoss { iteration: usize, view: usize },

    #[error("color model mismatch: file holds {found}, run expects {expected}")]
    ModelMismatch { expected: String, found: String },

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

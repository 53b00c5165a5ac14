use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid sidecar {path}: {message}")]
    Sidecar { path: PathBuf, message: String },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("non-finite value at voxel {index}")]
    NonFinite { index: usize },

    #[error("mask value {value} at voxel {index} is not 0 or 1")]
    MaskValue { index: usize, value: u8 },

    #[error("empty mask")]
    EmptyMask,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("dims {dims:?} not divisible by {factor} ({what})")]
    Indivisible {
        dims: [usize; 3],
        factor: usize,
        what: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label {label} out of range for k = {k}")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("need at least two non-empty clusters")]
    SingleCluster,

    #[error("dense activation maps need full-resolution features; the baseline variant only produces 1/{downsample} resolution")]
    BaselineDcam { downsample: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

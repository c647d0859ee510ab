//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("pixel ({row}, {col}) has intensity {value} outside [0, 1]")]
    IntensityOutOfRange { row: usize, col: usize, value: f32 },

    #[error("mask value at ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinaryMask { row: usize, col: usize, value: u8 },

    #[error("mask has no foreground pixels ({context})")]
    EmptyMask { context: &'static str },

    #[error("contour has no points")]
    EmptyContour,

    #[error("contour points are not an 8-connected closed sequence: {0}")]
    InvalidContour(String),

    #[error("contour point ({row}, {col}) lies outside the {height}x{width} image")]
    ContourOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid phantom parameters: {0}")]
    InvalidParams(String),

    #[error("invalid split request: {0}")]
    InvalidSplit(String),

    #[error(
        "input {height}x{width} is not divisible by {divisor} \
         (required by a {levels}-level encoder)"
    )]
    IndivisibleInput {
        height: usize,
        width: usize,
        divisor: usize,
        levels: usize,
    },

    #[error("missing {operator} masks for frames: {}", frame_ids.join(", "))]
    MissingMasks {
        operator: &'static str,
        frame_ids: Vec<String>,
    },

    #[error("assessments cover different frame sets; unmatched frames: {}", frames.join(", "))]
    FrameSetMismatch { frames: Vec<String> },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

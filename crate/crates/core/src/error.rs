use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes across the toolkit. Parse-type variants carry enough
/// context (file, line, element index) to point at the offending input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: corners inverted (x1={x1}, y1={y1}, x2={x2}, y2={y2})")]
    InvertedCorners { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("invalid box: negative size (w={w}, h={h})")]
    NegativeSize { w: f64, h: f64 },

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("threshold {0} outside [0, 1)")]
    ThresholdOutOfRange(f64),

    #[error("ground-truth box must have positive area")]
    ZeroAreaGroundTruth,

    #[error("predicted box must have positive area")]
    ZeroAreaPrediction,

    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("records span multiple images ({first:?} vs {second:?})")]
    MixedImageIds { first: String, second: String },

    #[error("malformed XML: {0}")]
    Xml(String),

    #[error("annotation for {image_id:?}: object {index}: {reason}")]
    Annotation {
        image_id: String,
        index: usize,
        reason: String,
    },

    #[error("{file}: {source}")]
    AnnotationFile {
        file: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("detection line {line}: {reason}")]
    DetectionLine { line: usize, reason: String },

    #[error("tensor length mismatch: expected {expected} values, found {found}")]
    TensorSize { expected: usize, found: usize },

    #[error("tensor byte length {0} is not a multiple of 4")]
    TensorBytes(usize),

    #[error("tensor contains a non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

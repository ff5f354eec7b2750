use std::path::PathBuf;

use crate::annotations::Category;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Display strings start with the variant name so command-line users can
/// match on them (`NoClassSamples: ...`).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("InvalidImage: {0}")]
    InvalidImage(String),

    #[error("InvalidPolygon: {0}")]
    InvalidPolygon(String),

    #[error("EmptyMask: polygon covers no pixel centre")]
    EmptyMask,

    #[error("DimensionMismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("ParseError: {0}")]
    Parse(String),

    #[error("UnknownCategory: {0:?}")]
    UnknownCategory(String),

    #[error("ScoreOutOfRange: {0}")]
    ScoreOutOfRange(f64),

    #[error("UnexpectedCategory: expected {expected}, found {found}")]
    UnexpectedCategory { expected: Category, found: Category },

    #[error("NoClassSamples: no `{0}` instances to build statistics from")]
    NoClassSamples(Category),

    #[error("DegenerateThreshold: new and old class means are both {0}")]
    DegenerateThreshold(f64),

    #[error("BothEmpty: IoU of two empty masks is undefined")]
    BothEmpty,

    #[error("NoGroundTruth: recall is undefined without ground-truth instances")]
    NoGroundTruth,

    #[error("ImageIdMismatch: {0}")]
    ImageIdMismatch(String),

    #[error("PlacementInfeasible: placed {placed} of {requested} buildings after {attempts} attempts for the next one")]
    PlacementInfeasible {
        placed: usize,
        requested: usize,
        attempts: usize,
    },

    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),

    #[error("ImageCodec: {0}")]
    ImageCodec(#[from] image::ImageError),

    #[error("Io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable identifier of the variant, as used in diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::InvalidImage(_) => "InvalidImage",
            Error::InvalidPolygon(_) => "InvalidPolygon",
            Error::EmptyMask => "EmptyMask",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::Parse(_) => "ParseError",
            Error::UnknownCategory(_) => "UnknownCategory",
            Error::ScoreOutOfRange(_) => "ScoreOutOfRange",
            Error::UnexpectedCategory { .. } => "UnexpectedCategory",
            Error::NoClassSamples(_) => "NoClassSamples",
            Error::DegenerateThreshold(_) => "DegenerateThreshold",
            Error::BothEmpty => "BothEmpty",
            Error::NoGroundTruth => "NoGroundTruth",
            Error::ImageIdMismatch(_) => "ImageIdMismatch",
            Error::PlacementInfeasible { .. } => "PlacementInfeasible",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::ImageCodec(_) => "ImageCodec",
            Error::Io { .. } => "Io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

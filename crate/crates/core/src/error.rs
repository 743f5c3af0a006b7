use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid segmentation: cannot split {frames} frames into {k} segments")]
    InvalidSegmentation { frames: usize, k: usize },

    #[error("statistic requested over an empty segment")]
    EmptySegment,

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{path}: row {row}: expected {expected} feature values, found {found}")]
    DimensionMismatch {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("unknown video id `{0}`")]
    UnknownVideo(String),

    #[error("duplicate video id `{0}`")]
    DuplicateVideoId(String),

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("invalid engagement label {0}; expected one of 0.0, 0.33, 0.66, 1.0")]
    InvalidLabel(f64),

    #[error("unknown modality `{0}`; expected gaze, head, pose or c3d")]
    UnknownModality(String),

    #[error("video `{video_id}` has no `{modality}` features")]
    MissingModality { video_id: String, modality: String },

    #[error("inconsistent segment counts in video `{0}`")]
    InconsistentSegments(String),

    #[error("input dimension mismatch at step {step}: expected {expected}, found {found}")]
    InputDimension {
        step: usize,
        expected: usize,
        found: usize,
    },

    #[error("trace does not match model: {0}")]
    TraceMismatch(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("epoch {epoch} outside 0..{epochs}")]
    EpochOutOfRange { epoch: usize, epochs: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(
        "train ratio {ratio} is not achievable at subject granularity; closest achievable train fraction is {closest:.4}"
    )]
    InfeasibleRatio { ratio: f64, closest: f64 },

    #[error("prediction sets cover different videos; symmetric difference: {0:?}")]
    CoverageMismatch(Vec<String>),

    #[error("no prediction for video `{0}`")]
    MissingPrediction(String),

    #[error("invalid ensemble weights: {0}")]
    InvalidWeights(String),

    #[error("verification failed: {}", .0.join(", "))]
    VerificationFailed(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 validation, 2 numeric failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => 2,
            Error::Io { .. } | Error::MissingFile(_) => 3,
            _ => 1,
        }
    }
}

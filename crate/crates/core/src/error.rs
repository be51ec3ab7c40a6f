use std::path::PathBuf;

use crate::catalog::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("embedding must have at least one component")]
    EmptyEmbedding,

    #[error("embedding contains a non-finite value at component {0}")]
    NonFinite(usize),

    #[error("zero-norm embedding (degenerate upstream extraction)")]
    ZeroNorm,

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("duplicate candidate class {0}")]
    DuplicateCandidate(ClassId),

    #[error("logit scale must be positive and finite, got {0}")]
    InvalidLogitScale(f64),

    #[error("fraction must lie in [0, 1], got {0}")]
    InvalidFraction(f64),

    #[error("mask is {mask_w}x{mask_h} but frame is {frame_w}x{frame_h}")]
    MaskDimensions {
        mask_w: u32,
        mask_h: u32,
        frame_w: u32,
        frame_h: u32,
    },

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("mask list is empty")]
    EmptyMasks,

    #[error("no prediction records")]
    EmptyRecords,

    #[error("record {frame_id} has ground truth {found}, expected {expected}")]
    MixedGroundTruth {
        frame_id: String,
        expected: ClassId,
        found: ClassId,
    },

    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),

    #[error("histograms and metrics are misaligned: {0}")]
    Misaligned(String),

    #[error("unknown class {0}")]
    UnknownClass(ClassId),

    #[error("invalid class catalog: {0}")]
    InvalidCatalog(String),

    #[error("distance must be non-negative and finite, got {0}")]
    NegativeDistance(f64),

    #[error(
        "anchor and negative coincide while the hinge is active; gradient direction undefined"
    )]
    DegenerateDirection,

    #[error("no negative class available")]
    NoNegativeClass,

    #[error("class {class} has {count} feature vector(s); at least 2 are needed as anchor source")]
    TooFewVectors { class: ClassId, count: usize },

    #[error("invalid triplet: {0}")]
    InvalidTriplet(String),

    #[error("no noise vector for class {0}")]
    MissingNoise(ClassId),

    #[error("invalid triplet configuration: {0}")]
    InvalidTripletConfig(String),

    #[error("EMB1 format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("image error in {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid run configuration: {0}")]
    Config(String),

    #[error("missing embeddings for frame(s): {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("embedding provider failure: {0}")]
    Provider(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for command-line front ends: 3 for provider
    /// failures, 2 for everything else (input validation).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Provider(_) => 3,
            _ => 2,
        }
    }
}

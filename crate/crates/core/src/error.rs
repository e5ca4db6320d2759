use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FetaError>;

/// Errors raised anywhere in the classification pipeline.
#[derive(Debug, Error)]
pub enum FetaError {
    // dataset
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} channels, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-numeric value {token:?}")]
    NonNumericValue { line: usize, token: String },
    #[error("line {line}: missing class label")]
    MissingLabel { line: usize },
    #[error("line {line}: label {label:?} is not declared in @classLabel")]
    UndeclaredLabel { line: usize, label: String },
    #[error("line {line}: channels have unequal lengths")]
    UnequalChannelLengths { line: usize },
    #[error("line {line}: empty channel")]
    EmptyChannel { line: usize },
    #[error("timestamped .ts files are not supported")]
    TimestampsUnsupported,
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("train and test splits disagree: {0}")]
    InconsistentSplits(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // numerics
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("channel {channel} out of range (series has {channels})")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("at least two distinct classes are required")]
    SingleClass,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("at least two samples are required")]
    TooFewSamples,
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("neighbor set is empty")]
    EmptyNeighbors,
    #[error("class set is empty")]
    EmptyClassSet,

    // llm transport
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("malformed api response: {0}")]
    MalformedApiResponse(String),
    #[error("http status {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("cache error: {0}")]
    Cache(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl FetaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FetaError::Io {
            path: path.into(),
            source,
        }
    }
}

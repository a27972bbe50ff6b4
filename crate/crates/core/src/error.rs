use std::path::PathBuf;

/// Errors produced by every stage of the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no usable feature frames: {0}")]
    EmptyFeatures(String),

    #[error("no active speech in signal")]
    NoActiveSpeech,

    #[error("no speech frames after voice activity detection")]
    NoSpeech,

    #[error("degenerate (zero-norm) vector")]
    DegenerateVector,

    #[error("numerical conditioning failure: {0}")]
    Conditioning(String),

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("score alignment error: {0}")]
    Alignment(String),

    #[error("train/test hygiene violation: {0}")]
    Hygiene(String),

    #[error("missing model {path}: run `{hint}` first")]
    MissingModel { path: PathBuf, hint: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Stable short identifier used by the CLI and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EmptyFeatures(_) => "empty-features",
            Error::NoActiveSpeech => "no-active-speech",
            Error::NoSpeech => "no-speech",
            Error::DegenerateVector => "degenerate-vector",
            Error::Conditioning(_) => "conditioning",
            Error::DegenerateTraining(_) => "degenerate-training",
            Error::Alignment(_) => "alignment",
            Error::Hygiene(_) => "hygiene",
            Error::MissingModel { .. } => "missing-model",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Wav(_) => "wav",
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

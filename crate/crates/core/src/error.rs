use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),
    #[error("clip is empty")]
    EmptyClip,
    #[error("signal too short: {len} samples, need at least {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("sample rate mismatch: clip has {clip} Hz, config expects {expected} Hz")]
    RateMismatch { clip: u32, expected: u32 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: syntax error: {msg}")]
    SyntaxError { line: usize, msg: String },
    #[error("line {line}: unknown class `{token}`")]
    UnknownClass { line: usize, token: String },
    #[error("line {line}: offset must be greater than onset")]
    NonPositiveDuration { line: usize },
    #[error("line {line}: event overlaps an earlier event of the same class")]
    OverlapWithinClass { line: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in {0}")]
    NonFiniteActivation(String),
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("forward cache does not belong to the current weights")]
    StaleCache,
    #[error("weight file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("weight file checksum error: {0}")]
    ChecksumError(String),
    #[error("model is incompatible: {0}")]
    IncompatibleModel(String),

    #[error("negative focal exponent: {0}")]
    NegativeExponent(f64),
    #[error("augmentation `{0}` is not supported")]
    UnsupportedAugment(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("duration must be positive, got {0}")]
    NonPositiveClipDuration(f64),
    #[error("degenerate interval ({0}, {1})")]
    DegenerateInterval(f64, f64),
    #[error("no recording has ground-truth events for the requested classes")]
    NoEligibleRecordings,

    #[error("synthetic spec is infeasible: {0}")]
    InfeasibleSpec(String),
    #[error("missing audio: {0}")]
    MissingAudio(PathBuf),
    #[error("missing input for stage {stage}: {what}")]
    MissingStageInput { stage: u8, what: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable snake_case identifier for the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotFound(_) => "not_found",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::CorruptHeader(_) => "corrupt_header",
            Error::EmptyClip => "empty_clip",
            Error::TooShort { .. } => "too_short",
            Error::RateMismatch { .. } => "rate_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::SyntaxError { .. } => "syntax_error",
            Error::UnknownClass { .. } => "unknown_class",
            Error::NonPositiveDuration { .. } => "non_positive_duration",
            Error::OverlapWithinClass { .. } => "overlap_within_class",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFiniteActivation(_) => "non_finite_activation",
            Error::NonFiniteGradient(_) => "non_finite_gradient",
            Error::StaleCache => "stale_cache",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::ChecksumError(_) => "checksum_error",
            Error::IncompatibleModel(_) => "incompatible_model",
            Error::NegativeExponent(_) => "negative_exponent",
            Error::UnsupportedAugment(_) => "unsupported_augment",
            Error::InvalidParam(_) => "invalid_param",
            Error::EmptyDataset => "empty_dataset",
            Error::DivergedLoss { .. } => "diverged_loss",
            Error::NonPositiveClipDuration(_) => "non_positive_clip_duration",
            Error::DegenerateInterval(..) => "degenerate_interval",
            Error::NoEligibleRecordings => "no_eligible_recordings",
            Error::InfeasibleSpec(_) => "infeasible_spec",
            Error::MissingAudio(_) => "missing_audio",
            Error::MissingStageInput { .. } => "missing_stage_input",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

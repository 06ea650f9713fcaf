use std::path::PathBuf;

/// Every failure the toolkit can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("stage output `{0}` not found in model graph")]
    MissingOutput(String),
    #[error("expected exactly {expected} stages, got {got}")]
    StageCount { expected: usize, got: usize },
    #[error("invalid backbone manifest: {0}")]
    InvalidManifest(String),
    #[error("image {height}x{width} is smaller than the {min}px minimum side")]
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    #[error("image value {value} outside the range [{lo}, {hi}]")]
    ImageOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("non-finite activation in stage {stage}")]
    NonFiniteActivation { stage: usize },
    #[error("backbone inference failed: {0}")]
    Inference(String),

    #[error("feature map {height}x{width} too small to downsample")]
    DimensionTooSmall { height: usize, width: usize },
    #[error("incompatible stage shapes: {0}")]
    IncompatibleShapes(String),
    #[error("kernel of side {kernel} does not fit a {height}x{width} map with reflection padding")]
    KernelLargerThanMap {
        kernel: usize,
        height: usize,
        width: usize,
    },

    #[error("sample matrix is empty")]
    EmptySample,
    #[error("sample weights are invalid: {0}")]
    InvalidWeights(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("configuration mismatch: model was built with {expected}, got {got}")]
    ConfigMismatch { expected: String, got: String },
    #[error("pooled covariance is singular")]
    SingularCovariance,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported model format version {found} (this build reads up to {supported})")]
    FormatVersionUnsupported { found: u64, supported: u64 },
    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),
    #[error("invalid model file: {0}")]
    InvalidFormat(String),

    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("{samples} samples are not enough to fit a {dim}-dimensional model")]
    InsufficientSamples { samples: usize, dim: usize },

    #[error("logistic fit diverged on every start")]
    FitDiverged,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance input")]
    ZeroVariance,
    #[error("weights sum to zero")]
    ZeroWeight,
    #[error("need at least {min} samples, got {n}")]
    TooFewSamples { n: usize, min: usize },

    #[error("directory contains no images: {0}")]
    EmptyDir(PathBuf),
    #[error("cannot decode image {path}: {reason}")]
    UndecodableImage { path: PathBuf, reason: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("unknown degradation kind `{0}`")]
    UnknownKind(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::InvalidModel(_) => "InvalidModel",
            Error::MissingOutput(_) => "MissingOutput",
            Error::StageCount { .. } => "StageCount",
            Error::InvalidManifest(_) => "InvalidManifest",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::ImageOutOfRange { .. } => "ImageOutOfRange",
            Error::NonFiniteActivation { .. } => "NonFiniteActivation",
            Error::Inference(_) => "Inference",
            Error::DimensionTooSmall { .. } => "DimensionTooSmall",
            Error::IncompatibleShapes(_) => "IncompatibleShapes",
            Error::KernelLargerThanMap { .. } => "KernelLargerThanMap",
            Error::EmptySample => "EmptySample",
            Error::InvalidWeights(_) => "InvalidWeights",
            Error::DimMismatch { .. } => "DimMismatch",
            Error::ConfigMismatch { .. } => "ConfigMismatch",
            Error::SingularCovariance => "SingularCovariance",
            Error::Io(_) => "IoError",
            Error::FormatVersionUnsupported { .. } => "FormatVersionUnsupported",
            Error::ChecksumMismatch(_) => "ChecksumMismatch",
            Error::InvalidFormat(_) => "InvalidFormat",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::FitDiverged => "FitDiverged",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::ZeroVariance => "ZeroVariance",
            Error::ZeroWeight => "ZeroWeight",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::EmptyDir(_) => "EmptyDir",
            Error::UndecodableImage { .. } => "UndecodableImage",
            Error::Parse(_) => "ParseError",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownKind(_) => "UnknownKind",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("gradient seed node {node} is not scalar (shape {shape:?})")]
    SeedNotScalar { node: usize, shape: Vec<usize> },

    #[error("leaf node {node} ({name}) has no binding")]
    UnboundLeaf { node: usize, name: String },

    #[error("series too short: need at least {needed} time steps, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("insufficient history: need at least {needed} rows, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("sigma must be strictly positive (index {index}, value {value})")]
    NonPositiveSigma { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate location id `{0}`")]
    DuplicateLocation(String),

    #[error("NaN cell at line {line}, column {column}")]
    NanCell { line: usize, column: usize },

    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("location sets differ: missing {missing:?}, unexpected {unexpected:?}")]
    LocationMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    #[error("decomposition depth {levels} needs at least {needed} time steps, got {got}")]
    LevelsTooDeep {
        levels: usize,
        needed: usize,
        got: usize,
    },

    #[error("scale {scale} out of range (available scales {min}..={max})")]
    ScaleOutOfRange { scale: usize, min: usize, max: usize },

    #[error("empty series")]
    EmptySeries,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}

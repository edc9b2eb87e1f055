use thiserror::Error;

/// Errors raised by the sketch, transform and tree pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside the open unit interval")]
    OutOfUnitInterval { value: f64 },

    #[error("invalid interval: lower bound {lower} is not below upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("square-wave argument {0} must be nonzero with modulus below pi")]
    SquareWaveDomain(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("series order must be positive")]
    ZeroOrder,

    #[error("invalid accuracy parameter: {0}")]
    InvalidAccuracy(String),

    #[error("sketch is empty (no points ingested)")]
    EmptySketch,

    #[error("operation requires a raw (unstandardized) sketch")]
    AlreadyStandardized,

    #[error("operation requires a standardized sketch")]
    NotStandardized,

    #[error("transform construction failed: {0}")]
    SingularTransform(String),

    #[error("invalid depth {depth}: {reason}")]
    InvalidDepth { depth: usize, reason: String },

    #[error("need at least {needed} points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("invalid correlation {rho} for dimension {p}")]
    InvalidCorrelation { rho: f64, p: usize },

    #[error("coordinate {axis} has zero range; cannot scale")]
    ZeroRange { axis: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

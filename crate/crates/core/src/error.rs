use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid simplex weights: {0}")]
    InvalidWeights(String),

    #[error("singular information matrix: direction lies outside the span of the design")]
    SingularDesign,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no arm satisfies every safety constraint")]
    NoSafeArm,

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("design budget exceeded cap 2^{cap_log2} (infeasible or degenerate problem)")]
    BudgetExplosion { cap_log2: u32 },

    #[error("run exceeded the pull cap of {cap}")]
    PullCap { cap: u64 },

    #[error("every arm was discarded as unsafe")]
    AllDiscarded,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

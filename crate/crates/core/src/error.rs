use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("point is not on the manifold: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("points are at the cut locus; the minimizing geodesic is not unique")]
    CutLocus,

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("partitions are not nested")]
    NotNested,

    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),

    #[error("heat kernel series did not reach tolerance {tolerance:e} within {cap} terms at t = {t} (tail bound {bound:e})")]
    TruncationCap {
        t: f64,
        cap: usize,
        bound: f64,
        tolerance: f64,
    },

    #[error("rejection envelope exceeded after {rebuilds} rebuilds (ratio {ratio}, bound {bound})")]
    EnvelopeExhausted {
        rebuilds: usize,
        ratio: f64,
        bound: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sample count must be positive")]
    ZeroSamples,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("path file parse error at line {line}: {message}")]
    PathFile { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::PathFile { .. }
            | Error::InvalidManifold(_)
            | Error::InvalidPoint(_)
            | Error::InvalidPartition(_)
            | Error::NotNested
            | Error::DimensionMismatch { .. }
            | Error::NonPositiveTime(_)
            | Error::Unsupported(_)
            | Error::ZeroSamples
            | Error::InvalidArgument(_) => 2,
            Error::Io(_) | Error::Json(_) => 4,
            Error::CutLocus | Error::TruncationCap { .. } | Error::EnvelopeExhausted { .. } => 3,
        }
    }
}

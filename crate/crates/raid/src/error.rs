use thiserror::Error;

/// Errors surfaced by the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot revert from an empty state")]
    EmptyRevert,

    #[error("statistic requires at least {required} samples, have {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("weight {0} outside [0, 1]")]
    InvalidWeight(f64),

    #[error("quantile {0} outside (0, 1)")]
    InvalidQuantile(f64),

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("covariance not factorizable even after regularization")]
    NonFactorizable,

    #[error("interval [{lo}, {hi}] does not bracket a root")]
    NonBracketing { lo: f64, hi: f64 },

    #[error("observation timestamp {got} does not advance past {last}")]
    NonIncreasingTimestamp { last: f64, got: f64 },

    #[error("non-positive inter-arrival time {0}")]
    NonPositiveInterval(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("no parseable rows in input")]
    EmptyStream,

    #[error("unsupported snapshot version {0}")]
    SnapshotVersion(u32),

    #[error("corrupted snapshot: {0}")]
    SnapshotCorrupt(String),

    #[error("invalid scenario parameters: {0}")]
    InvalidScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors shared by the sketch, estimator, codec and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("sketch configurations do not match")]
    ConfigMismatch,

    #[error("HIP state is unavailable (sketch was merged)")]
    HipUnavailable,

    #[error("collected count {0} exceeds estimator capacity")]
    CapacityExceeded(u64),

    #[error("argument out of range: {0}")]
    OutOfRange(&'static str),

    #[error("corrupt data: {0}")]
    Corrupt(&'static str),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),

    #[error("checkpoint beyond simulated range")]
    CheckpointBeyondTrace,

    #[error("rank-deficient least-squares system")]
    RankDeficient,
}

pub type Result<T> = std::result::Result<T, Error>;

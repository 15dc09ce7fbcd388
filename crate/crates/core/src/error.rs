use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image geometry: {0}")]
    Geometry(String),
    #[error("quality factor {0} outside 1..=100")]
    Quality(u32),
    #[error("image too small: {0}")]
    TooSmall(String),
    #[error("payload of {payload} bits exceeds capacity {capacity}")]
    PayloadExceedsCapacity { payload: u64, capacity: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("singular system")]
    Singular,
    #[error("ill-conditioned system (condition estimate {0:.3e})")]
    IllConditioned(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

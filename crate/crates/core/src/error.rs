use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("amplitude vector length {0} is not a power of two >= 2")]
    BadLength(usize),
    #[error("state vector is zero")]
    ZeroVector,
    #[error("state norm deviates from 1 by {0:e} (tolerance 1e-9)")]
    NotNormalized(f64),
    #[error("qubit count {0} out of range [1, {max}]", max = crate::state::MAX_QUBITS)]
    QubitCount(usize),
    #[error("qubit index {index} out of range for {n} qubits")]
    QubitIndex { index: usize, n: usize },
    #[error("pair measurement needs two distinct qubits, got ({0}, {0})")]
    SameQubit(usize),
    #[error("unknown state name `{0}`")]
    UnknownState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no estimate for plan entry {0}")]
    MissingEstimate(usize),
    #[error("malformed probability vector: {0}")]
    BadProbabilities(String),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

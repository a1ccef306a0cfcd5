use thiserror::Error;

/// Crate-wide error type. Variants correspond to the failure modes of the
/// individual subsystems; CLI and FFI layers map them onto exit/status codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stimulation row {row} is all zeros: every event must stimulate at least one camera")]
    EmptyRow { row: usize },
    #[error("stimulation rows {first} and {second} are identical: model is not identifiable")]
    DuplicateRows { first: usize, second: usize },
    #[error("{requested} events requested but only {available} distinct nonzero stimulation vectors exist")]
    TooManyEvents { requested: usize, available: u128 },
    #[error("event priors invalid: {reason}")]
    BadPriors { reason: String },
    #[error("{name} = {value} is outside its admissible range")]
    BadProbability { name: &'static str, value: f64 },
    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("event {event} cannot be identified by any camera")]
    NoStimulatedCamera { event: usize },
    #[error("cannot enumerate hypercube vertices for {n_cameras} cameras (limit {limit})")]
    DimensionTooLarge { n_cameras: usize, limit: usize },
    #[error("non-finite value encountered in {context}")]
    NonFiniteData { context: &'static str },
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("test split is empty (dataset of {dataset_len} rows, train fraction {train_fraction})")]
    EmptyTestSplit {
        dataset_len: usize,
        train_fraction: f64,
    },
    #[error("dimension mismatch: {context} ({left} vs {right})")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("empty sample set: {context}")]
    EmptySamples { context: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed {what}: {reason}")]
    Parse { what: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

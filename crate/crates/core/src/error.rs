use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tape does not belong to the current parameters (stale or foreign tape)")]
    StaleTape,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty sample set")]
    EmptySamples,

    #[error("replay buffer holds {have} transitions, {need} requested")]
    UnderfilledBuffer { have: usize, need: usize },

    #[error("infeasible safety margin: beta {beta} <= delta/sqrt(epsilon) = {margin}")]
    InfeasibleMargin { beta: f64, margin: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical abort at step {step}: {what}")]
    NumericalAbort { step: u64, what: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

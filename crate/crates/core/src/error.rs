use thiserror::Error;

/// Errors surfaced by the simulation, learning, and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (dimensions, roster, flags, file contents).
    #[error("configuration error: {0}")]
    Config(String),

    /// Operation on an episode that already ended.
    #[error("lifecycle error: {0}")]
    Lifecycle(String),

    /// Wrong number of elements supplied (actions, reward streams, ...).
    #[error("arity error: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    /// Out-of-range agent or action index.
    #[error("index error: {0}")]
    Index(String),

    /// Non-finite value produced by a network forward pass or gradient.
    #[error("numerical fault: {0}")]
    Numerical(String),

    /// Checkpoint load/save failure (shape mismatch, bad payload).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Missing or malformed run artifacts (metrics, trace logs).
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

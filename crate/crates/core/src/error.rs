use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum AihfError {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("policy is not absolutely continuous w.r.t. the reference at state {state}, action {action}")]
    InfiniteKl { state: usize, action: usize },

    #[error("comparison graph is disconnected: {0}")]
    DisconnectedComparisons(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("parameters diverged at iteration {iteration} (norm {norm:.3e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, AihfError>;

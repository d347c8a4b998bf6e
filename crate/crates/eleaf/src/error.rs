use thiserror::Error;

/// Unified error type for configuration, argument, and I/O failures.
///
/// The CLI maps these to exit code 2 (usage/configuration); check *failures*
/// (an equivalence or gradient check that ran but did not pass) are reported
/// through result types, not through this enum.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid run configuration (out-of-range constants, inconsistent plan).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Invalid argument to an individual operation (e.g. an even kernel size).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input outside an operation's mathematical domain (negative frequency,
    /// negative energy, non-finite sample).
    #[error("domain error: {0}")]
    Domain(String),

    /// Tensor shape mismatch between values that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Operation called in an invalid state (e.g. eval-mode batch norm before
    /// any training batch has populated the running statistics).
    #[error("invalid state: {0}")]
    State(String),

    /// Input that makes the requested measurement meaningless
    /// (e.g. comparing pipelines on digital silence).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Malformed file contents; `offset` is the byte position of the problem.
    #[error("malformed file at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

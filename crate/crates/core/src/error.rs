use thiserror::Error;

/// Errors surfaced by the planning library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (e.g. observing a known PBP).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("environment generation failed: {0}")]
    Generation(String),
    #[error("predictor: {0}")]
    Predictor(String),
    #[error("invalid dataset record: {0}")]
    Dataset(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    /// States the belief guarantees make unreachable (e.g. an empty joint action set).
    #[error("internal planner error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

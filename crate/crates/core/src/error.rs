use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("stalled process: every node has zero hazard")]
    StalledProcess,
    #[error("insufficient data for key {0}")]
    InsufficientData(String),
    #[error("integration did not converge for key {key} after {levels} levels")]
    Integration { key: String, levels: usize },
    #[error("all grid points have zero posterior mass")]
    EmptyGrid,
    #[error("degenerate ground truth: {0}")]
    DegenerateTruth(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

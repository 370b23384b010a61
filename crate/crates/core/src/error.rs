use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("reference channel has zero energy")]
    ZeroEnergy,

    #[error("measurement routes disagree: relative error {0:.3e}")]
    RouteMismatch(f64),

    #[error("malformed measurement container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

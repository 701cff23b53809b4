use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no date overlap between {0}")]
    Alignment(String),

    #[error("missing values on {} date(s): {}", .0.len(), .0.join(", "))]
    Gap(Vec<String>),

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("degenerate inputs: {0}")]
    Degenerate(String),

    #[error("matrix is ill-conditioned: {0}")]
    Conditioning(String),

    #[error("missing correlation pairs: {}", .0.join(", "))]
    MissingPairs(Vec<String>),

    #[error("undefined Sharpe ratio: {0}")]
    UndefinedSharpe(String),

    #[error("degenerate sample `{sample}`: {reason}")]
    DegenerateSample { sample: String, reason: String },

    #[error("malformed reply {0:?}")]
    MalformedReply(String),

    #[error("transport: {0}")]
    Transport(String),

    #[error("fetch produced no articles ({0} failures)")]
    FetchFailed(usize),

    #[error("prediction unavailable: {0}")]
    MissingPrediction(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: value {value} outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root finder failed: {0}")]
    Solver(String),

    #[error("circulant embedding has eigenvalue {min_eigenvalue:e} below tolerance (max {max_eigenvalue:e})")]
    Embedding {
        min_eigenvalue: f64,
        max_eigenvalue: f64,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("grid resolution: {0}")]
    GridResolution(String),

    #[error("series truncation: {0}")]
    Truncation(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn range(what: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::Range { what, value, lo, hi }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("satellite below horizon (elevation {0} rad)")]
    BelowHorizon(f64),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("time stream error: {0}")]
    Timing(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable code used in the CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::BelowHorizon(_) => "below_horizon",
            Error::Degenerate(_) => "degenerate",
            Error::Timing(_) => "timing",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors produced by the planning and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("policy enumeration needs {needed} policies, budget is {budget}")]
    EnumerationBudget { needed: f64, budget: u64 },

    #[error("Blackwell detection failed: {0}")]
    BlackwellDetection(String),

    #[error("instance generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than runtime failure.
    /// Malformed JSON counts as bad input; failing to read it does not.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidMdp(_)
            | Error::InvalidPolicy(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidParameter(_)
            | Error::EnumerationBudget { .. } => true,
            Error::Json(e) => !e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

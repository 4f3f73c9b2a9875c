use thiserror::Error;

use crate::dsp::emd::Decomposition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown lead label `{0}`")]
    UnknownLead(String),

    #[error("unit mismatch: expected {expected}, found {found}")]
    UnitMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("filter design failed: {0}")]
    Design(String),

    /// Sifting did not reach the stop criterion. Carries the IMFs extracted so far.
    #[error("EMD sifting did not converge on IMF {imf_index} after {sifts} sifts")]
    EmdNonConvergence {
        imf_index: usize,
        sifts: usize,
        partial: Box<Decomposition>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("unsupported container version `{0}`")]
    UnsupportedVersion(String),

    #[error("data integrity error: {0}")]
    Integrity(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Re-tags invalid input as a configuration problem, for validation of
    /// specs that come from config files.
    pub fn as_config(self) -> Self {
        match self {
            Error::InvalidInput(m) => Error::Config(m),
            other => other,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data integrity, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) | Error::UnknownLead(_) | Error::Design(_) | Error::Json(_) => 2,
            Error::InvalidInput(_) | Error::UnitMismatch { .. } => 2,
            Error::UnsupportedVersion(_) | Error::Integrity(_) | Error::Csv(_) | Error::Io(_) => 3,
            Error::EmdNonConvergence { .. } | Error::Numeric(_) => 4,
        }
    }
}

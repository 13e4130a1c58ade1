use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("missing modality: {0}")]
    MissingModality(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time alignment failed: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classes; the command-line tool maps them to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config { .. } => ErrorClass::Config,
            Error::Io(_) | Error::MissingArtifact(_) | Error::Csv(_) | Error::Json(_) => {
                ErrorClass::Io
            }
            Error::Checkpoint(_) | Error::MalformedStream(_) => ErrorClass::Io,
            Error::EmptyInput(_)
            | Error::MissingModality(_)
            | Error::InsufficientData(_)
            | Error::Alignment(_)
            | Error::Shape(_)
            | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }
}

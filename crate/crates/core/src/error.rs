use thiserror::Error;

/// Unified error type for the engine.
///
/// Variants are grouped so the CLI can honor its exit-code contract:
/// configuration problems exit 1, data problems exit 2, completion-backend
/// problems exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("backend: {0}")]
    Backend(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("numeric: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI contract: 1 config, 2 data, 3 backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) | Error::Parse(_) | Error::Numeric(_) => 2,
            Error::Backend(_) => 3,
        }
    }
}

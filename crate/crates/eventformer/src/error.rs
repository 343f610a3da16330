//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration value or incompatible dimensions in a config.
    #[error("config error: {0}")]
    Config(String),

    /// Invalid input data (corpus records, vocabularies, checkpoints).
    #[error("data error: {0}")]
    Data(String),

    /// An API contract was violated (non-scalar loss, nondeterministic
    /// gradcheck fragment, missing history).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    /// Unexpected internal failure; maps to exit code 2 in the CLI.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// CLI exit code: 1 for validation/usage problems, 2 for internal faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

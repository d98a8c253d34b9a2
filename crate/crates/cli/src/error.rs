use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] msdcanet::Error),

    #[error("{0}")]
    Usage(String),

    #[error("config file {path}: {message}")]
    Config { path: PathBuf, message: String },

    /// Gradient check or other numeric verification failure.
    #[error("{0}")]
    Numeric(String),

    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

impl CliError {
    /// 0 success, 1 validation, 2 numeric failure, 3 IO or file format.
    pub fn exit_code(&self) -> u8 {
        use msdcanet::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Numeric(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::NonFinite(_) => 2,
                E::Io(_) | E::Image { .. } | E::Format(_) | E::UnsupportedVersion { .. } | E::Pairing(_) | E::Serde(_) => 3,
                _ => 1,
            },
        }
    }
}

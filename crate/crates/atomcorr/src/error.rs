use thiserror::Error;

/// Errors produced anywhere in the simulation / analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter or configuration value is outside its valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration file or flag combination is invalid.
    #[error("config error: {0}")]
    Config(String),

    /// File I/O failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A data file is malformed.
    #[error("parse error: {0}")]
    Parse(String),

    /// The Gaussian peak fit did not converge.
    #[error("fit failure: {0}")]
    FitFailure(String),
}

impl Error {
    /// Stable process exit code for each error class.
    ///
    /// 0 = success, 2 = config/domain error, 3 = I/O or parse error,
    /// 4 = fit failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) => 2,
            Error::Io(_) | Error::Parse(_) => 3,
            Error::FitFailure(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

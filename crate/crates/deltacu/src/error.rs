use thiserror::Error;

/// Crate-wide error type. The variants map onto CLI exit codes:
/// config errors exit 2, data errors exit 3, numerical failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Variant message without the Display prefix, for callers that re-wrap
    /// with extra context (e.g. a CSV line number).
    pub fn message(&self) -> String {
        match self {
            Error::Config(m) | Error::Data(m) | Error::Numerical(m) => m.clone(),
            Error::Io(e) => e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

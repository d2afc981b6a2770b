use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input outside the domain of a model formula.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("missing variance for Zernike mode {0}")]
    MissingMode(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

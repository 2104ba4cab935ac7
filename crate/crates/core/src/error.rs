use thiserror::Error;

/// Errors raised by the inference pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid seed schedule: {0}")]
    Schedule(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("calendar error: {0}")]
    Calendar(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Size(_) => "size",
            Error::Parameter(_) => "parameter",
            Error::Parse { .. } => "parse",
            Error::Schedule(_) => "schedule",
            Error::Dimension(_) => "dimension",
            Error::DegenerateData(_) => "degenerate_data",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Calendar(_) => "calendar",
            Error::Split(_) => "split",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

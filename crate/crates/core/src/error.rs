use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParams {
        family: &'static str,
        reason: String,
    },

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid summary statistics: {0}")]
    InvalidStats(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least 2 observations, got {0}")]
    InsufficientData(usize),

    #[error("summary vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("no candidate family survives the support checks")]
    NoActiveFamilies,

    #[error("family {0} is not active in the prior bank")]
    InactiveFamily(&'static str),

    #[error("no draw fell within tolerance {0}")]
    NoAcceptedDraws(f64),

    #[error("relative error undefined for a zero true value")]
    ZeroTruth,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from user input rather than a failure at run time.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NoAcceptedDraws(_) | Error::ZeroTruth | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

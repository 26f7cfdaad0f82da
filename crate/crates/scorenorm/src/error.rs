use thiserror::Error;

/// Errors produced by the scorenorm library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("degenerate cohort: {0}")]
    DegenerateCohort(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of numerical linear algebra or optimization, as
    /// opposed to invalid inputs. The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: invalid residue '{letter}' in sequence \"{sequence}\"")]
    InvalidResidue {
        line: usize,
        letter: char,
        sequence: String,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unknown descriptor '{name}'; available: {available}")]
    UnknownDescriptor { name: String, available: String },

    #[error("descriptor '{0}' is not supported (it is not additive over residues)")]
    UnsupportedDescriptor(String),

    #[error("chemical space holds {size} sequences, above the enumeration cap of {cap}; use sampling instead")]
    Capacity { size: u128, cap: u128 },

    #[error("descriptor '{0}' has zero variance over the alphabet; the normal approximation is degenerate")]
    DegenerateDescriptor(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing descriptor '{0}'")]
    MissingDescriptor(String),

    #[error("{0}")]
    Training(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

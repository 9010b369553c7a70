use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode: {0}")]
    InvalidMode(String),
    #[error("SNR is undefined for a constant signal")]
    UndefinedSnr,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("window field t^{power} g^({deriv}) is not available")]
    MissingField { power: usize, deriv: u8 },
    #[error("axis mismatch: {0}")]
    AxisMismatch(String),
    #[error("unsupported order {0}")]
    UnsupportedOrder(usize),
    #[error("wrong matrix kind: expected {expected}, got {actual}")]
    KindMismatch { expected: &'static str, actual: &'static str },
    #[error("all-zero distribution")]
    ZeroDistribution,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

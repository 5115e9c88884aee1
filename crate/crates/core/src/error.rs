use thiserror::Error;

/// Errors raised by the G-expectation toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GexpError {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A perturbation precondition failed on one block of the base control.
    #[error("block {block}: squared level range [{level_sq_lo}, {level_sq_hi}] leaves the shrunk band [{band_lo}, {band_hi}]")]
    BlockOutOfBand {
        block: usize,
        level_sq_lo: f64,
        level_sq_hi: f64,
        band_lo: f64,
        band_hi: f64,
    },

    /// Grid or solver configuration is unusable (CFL, stability, shapes).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data is not finite or otherwise unusable.
    #[error("data error: {0}")]
    Data(String),

    /// The request exceeds a declared capability (e.g. too many cylinder times).
    #[error("capability error: {0}")]
    Capability(String),

    /// Arguments do not fit together (shape mismatch, off-grid times).
    #[error("usage error: {0}")]
    Usage(String),

    /// A lookup fell outside the discretized domain.
    #[error("extrapolation error: {0}")]
    Extrapolation(String),

    /// An iterative numeric procedure failed.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, GexpError>;

impl From<std::io::Error> for GexpError {
    fn from(e: std::io::Error) -> Self {
        GexpError::Io(e.to_string())
    }
}

impl From<csv::Error> for GexpError {
    fn from(e: csv::Error) -> Self {
        GexpError::Io(e.to_string())
    }
}

use gexp_core::GexpError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at {location}: {message}")]
    Config { location: String, message: String },

    #[error("{location}: {source}")]
    Run {
        location: String,
        #[source]
        source: GexpError,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Errors raised by the numerics on configuration-level grounds count as configuration errors.
    pub fn from_run(location: String, source: GexpError) -> Self {
        match source {
            GexpError::Config(message) | GexpError::Domain(message) => {
                CliError::Config { location, message }
            }
            source => CliError::Run { location, source },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}

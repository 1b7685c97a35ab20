use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An SPD solve failed even after one jitter retry.
    #[error("ill-conditioned system in {context} (condition estimate {condition_estimate:.3e})")]
    IllConditioned {
        context: String,
        condition_estimate: f64,
    },

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("numeric failure at slot {slot}: {message}")]
    Numeric { slot: usize, message: String },

    /// A quantity that is guaranteed analytically was violated on an actual run.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("snapshot error: {0}")]
    Snapshot(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Errors that stem from floating point trouble rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::NonFinite(_)
                | Error::Numeric { .. }
                | Error::InvariantViolation(_)
        )
    }
}

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::invalid(format!(
            "{what}: expected dimension {expected}, got {got}"
        )));
    }
    Ok(())
}

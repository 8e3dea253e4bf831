use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{solver} did not converge within {iterations} iterations (last residual {residual:e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{0}")]
    Unstable(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment {experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context,
                expected,
                actual,
            })
        }
    }
}

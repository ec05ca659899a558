use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    /// Regressor energy fell below the configured floor.
    #[error("degenerate regressor: energy {energy:e} below floor {floor:e}")]
    DegenerateRegressor { energy: f64, floor: f64 },

    #[error("non-finite MSE at iteration {iteration}")]
    NonFinite { iteration: usize },

    /// A Monte-Carlo run failed; `seed` replays it on its own.
    #[error("run {run} (seed {seed:#018x}) failed: {source}")]
    RunFailed {
        run: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_len(expected: usize, actual: usize, context: &'static str) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected,
                actual,
                context,
            })
        }
    }
}

//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: non-stochastic matrix, bad alphabet, wrong shape.
    #[error("validation error: {0}")]
    Validation(String),

    /// Chain is reducible or periodic, so it has no unique stationary law.
    #[error("structure error: {0}")]
    Structure(String),

    #[error("range error: {name} = {value} is outside {expected}")]
    Range {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("parameter error: {0}")]
    Parameter(String),

    /// A transmission record whose segments disagree with its insertion
    /// counts and deletion flags.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// The observed sequence has probability zero under the model.
    #[error("impossible observation at position {position}")]
    ImpossibleObservation { position: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported combination: insertion and deletion probabilities are both nonzero")]
    UnsupportedCombination,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Checks that `value` is a probability in `[0, 1]`.
pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Range {
            name,
            value,
            expected: "[0, 1]",
        })
    }
}

/// Checks that `value` lies in `[0, 1)`.
pub(crate) fn check_open_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Range {
            name,
            value,
            expected: "[0, 1)",
        })
    }
}

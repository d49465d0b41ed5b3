use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A bare state could not be matched to a single dressed eigenstate.
    #[error("ambiguous level label: best overlap {overlap:.4} with level {index} is below 0.5")]
    AmbiguousLabel { index: usize, overlap: f64 },

    #[error("avoided-crossing search failed: {0}")]
    SearchFailure(String),

    #[error("divergent energy denominator {denominator:e} at intermediate state {state}")]
    DivergentDenominator { state: String, denominator: f64 },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("numerical integrity violated: {0}")]
    NumericalIntegrity(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

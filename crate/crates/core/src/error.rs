use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The sliding variable (or the control action derived from it) is too
    /// close to zero for its argument to be defined.
    #[error("degenerate sliding variable: |σ| = {magnitude:e} is below the {epsilon:e} threshold")]
    DegenerateSigma { magnitude: f64, epsilon: f64 },

    #[error("invalid duty cycle {value}: {reason}")]
    InvalidDuty { value: f64, reason: &'static str },

    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("range error: {0}")]
    Range(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }
}

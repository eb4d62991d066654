use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or shape mismatch.
    #[error("input error: {0}")]
    Input(String),

    /// A linear-algebra routine failed beyond recovery.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// CSV or model-file parsing failed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Simulation produced a non-finite or diverging state.
    #[error("simulation error at step {step}: {message}")]
    Simulation { step: usize, message: String },

    /// Model rollout produced a non-finite lifted state.
    #[error("prediction error at step {step}: {message}")]
    Prediction { step: usize, message: String },

    /// Requested operation is not defined for the model configuration.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

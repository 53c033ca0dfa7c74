//! Error type shared by every module of the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A geometric-lemma coefficient came out non-positive.
    #[error("non-positive coefficient c_k = {value:e} ({context})")]
    NonPositiveCoefficient { value: f64, context: String },

    #[error("non-positive energy bracket {bracket:e} for chart l = {l}")]
    NonPositiveEnergyGap { l: usize, bracket: f64 },

    #[error("unstable step: dt = {dt:e} exceeds stability bound {bound:e}")]
    StepUnstable { dt: f64, bound: f64 },

    #[error("unresolved: {0}")]
    Unresolved(String),

    #[error("mollifier radius {ell:e} below resolution {resolution:e}")]
    KernelUnresolved { ell: f64, resolution: f64 },

    #[error("configuration error for key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("strict-mode gate refused: {0}")]
    StrictGate(String),

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for errors caused by numerical instability or loss of resolution.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::StepUnstable { .. }
                | Error::Unresolved(_)
                | Error::KernelUnresolved { .. }
                | Error::NonPositiveCoefficient { .. }
                | Error::NonPositiveEnergyGap { .. }
        )
    }
}

use thiserror::Error;

/// Errors raised by the scattering and time-delay computations.
///
/// Variants are grouped by how a caller is expected to react: `Config` and
/// `Domain` errors mean the request itself is invalid, `Certificate` errors
/// mean a numerical quality check failed and the result must not be trusted.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Domain(String),

    #[error("energy {energy} lies within {radius} of threshold {threshold}")]
    Threshold {
        energy: f64,
        threshold: f64,
        radius: f64,
    },

    #[error("certificate `{name}` failed: measured {value:.3e}, tolerance {tolerance:.3e}")]
    Certificate {
        name: &'static str,
        value: f64,
        tolerance: f64,
    },

    #[error("at energy index {index}: {source}")]
    AtEnergy {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("representation mismatch: expected {expected}, found {found}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },
}

impl Error {
    pub(crate) fn certificate(name: &'static str, value: f64, tolerance: f64) -> Self {
        Error::Certificate {
            name,
            value,
            tolerance,
        }
    }

    /// Returns the innermost error, unwrapping energy-index context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEnergy { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the failure is a numerical certificate rather than bad input.
    pub fn is_certificate(&self) -> bool {
        matches!(self.root(), Error::Certificate { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

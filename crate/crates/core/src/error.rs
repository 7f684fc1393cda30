use thiserror::Error;

/// Failure of a user or built-in evaluator callback.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    /// An evaluator produced NaN or an infinity.
    #[error("non-finite value in {function} at component {index}")]
    NonFinite { function: &'static str, index: usize },
    /// Input or output had the wrong length.
    #[error("dimension mismatch in {function}: expected {expected}, got {got}")]
    Dimension {
        function: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Checks every entry of `values`, reporting the first non-finite one.
pub fn ensure_finite(function: &'static str, values: &[f64]) -> Result<(), EvalError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(EvalError::NonFinite { function, index }),
        None => Ok(()),
    }
}

pub fn ensure_len(function: &'static str, expected: usize, got: usize) -> Result<(), EvalError> {
    if expected == got {
        Ok(())
    } else {
        Err(EvalError::Dimension {
            function,
            expected,
            got,
        })
    }
}

/// Invalid solver or experiment configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid option `{name}`: {reason}")]
    InvalidOption { name: &'static str, reason: String },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

impl ConfigError {
    pub(crate) fn option(name: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::InvalidOption {
            name,
            reason: reason.into(),
        }
    }
}

/// Errors raised by the rate-analysis toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("reduced Hessian is singular or indefinite; the local minimizer is not isolated")]
    Degenerate,
    #[error("power iteration did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("history has {usable} usable multiplier steps but {needed} are required; use a smaller tail or a tighter stopping tolerance")]
    InsufficientHistory { usable: usize, needed: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

use thiserror::Error;

use crate::radial::Space;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Each variant belongs to exactly one [`ErrorCategory`], which the command
/// line maps onto a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    ConfigList(Vec<String>),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("parameter condition violated: {0}")]
    Condition(String),

    #[error("fields live on different grids: {0}")]
    GridMismatch(String),

    #[error("expected a {expected} field, got a {found} field")]
    WrongSpace { expected: Space, found: Space },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(
        "negative radicand {value:.3e} at k = {k:.6e}; the grid is probably under-resolved \
         (increase grid-n or decrease r-max)"
    )]
    Radicand { k: f64, value: f64 },

    #[error("{what} did not converge after {iterations} iterations (last change {last:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Convergence,
    Invariant,
    Io,
}

impl ErrorCategory {
    /// Process exit code for this category.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Convergence => 3,
            ErrorCategory::Invariant => 4,
            ErrorCategory::Io => 5,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_)
            | Error::ConfigList(_)
            | Error::InvalidPotential(_)
            | Error::Condition(_)
            | Error::Parse { .. } => ErrorCategory::Config,
            Error::NonConvergence { .. } | Error::Integration(_) => ErrorCategory::Convergence,
            Error::GridMismatch(_)
            | Error::WrongSpace { .. }
            | Error::InvariantViolation(_)
            | Error::Radicand { .. } => ErrorCategory::Invariant,
            Error::Io(_) | Error::Serialize(_) => ErrorCategory::Io,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.category().exit_code()
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::InvariantViolation(msg.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_category() {
        let codes = [
            ErrorCategory::Config,
            ErrorCategory::Convergence,
            ErrorCategory::Invariant,
            ErrorCategory::Io,
        ]
        .map(ErrorCategory::exit_code);
        for (i, a) in codes.iter().enumerate() {
            assert_ne!(*a, 0);
            for b in &codes[i + 1..] {
                assert_ne!(a, b);
            }
        }
        assert_eq!(Error::config("x").exit_code(), 2);
        assert_eq!(
            Error::NonConvergence {
                what: "x".into(),
                iterations: 1,
                last: 1.0,
                history: vec![]
            }
            .exit_code(),
            3
        );
        assert_eq!(Error::Radicand { k: 1.0, value: -1.0 }.exit_code(), 4);
    }
}

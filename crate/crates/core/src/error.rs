use thiserror::Error;

/// Errors raised by the reconstruction library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape {ny}x{nx}: {reason}")]
    InvalidShape { ny: usize, nx: usize, reason: &'static str },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("infeasible constraint set: {0}")]
    InfeasibleConstraints(String),

    #[error("empty hologram set")]
    EmptyHolograms,

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("stagnation: iterate and gradient differences are both zero")]
    Stagnation,

    #[error("degenerate problem: {0}")]
    Degenerate(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

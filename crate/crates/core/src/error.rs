use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("Landweber iteration did not converge in {iterations} iterations (residual {residual:.3e})")]
    LandweberNotConverged { iterations: usize, residual: f64 },

    #[error("iteration diverged at step {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("unknown {what}: {name}")]
    Unknown { what: &'static str, name: String },

    #[error("bad magic bytes in {}", path.display())]
    BadMagic { path: PathBuf },

    #[error("truncated payload in {}: expected {expected} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("dimension overflow in {}", path.display())]
    DimOverflow { path: PathBuf },

    #[error("unsupported raw format {what} {value} in {}", path.display())]
    UnsupportedFormat {
        path: PathBuf,
        what: &'static str,
        value: u64,
    },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

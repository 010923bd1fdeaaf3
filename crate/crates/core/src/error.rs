//! Shared error type for the whole crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}={value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// `exp(mu + sigma^2/2)` would leave double precision.
    #[error("expected value overflows exp({exponent:.3}) for mu={mu}, sigma={sigma}")]
    Overflow { mu: f64, sigma: f64, exponent: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 3 I/O, 4 parse/schema, 5 config,
    /// 6 numeric/domain.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Parse { .. } | Error::Json(_) => 4,
            Error::Config(_) => 5,
            _ => 6,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user input: scenario, generator arguments, boundary specification.
    #[error("configuration error: {0}")]
    Config(String),

    /// Config file problem tied to a key path and a source line.
    #[error("{path}:{line}: `{key}`: {message}")]
    ConfigKey {
        path: String,
        line: usize,
        key: String,
        message: String,
    },

    /// Argument outside the admissible range of a constitutive law.
    #[error("domain error in {what}: {value} ({constraint})")]
    Domain {
        what: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// `1 + eta * dw <= 0` in a pore-fraction update.
    #[error("singular pore-fraction update: 1 + eta*dw = {denominator}")]
    SingularUpdate { denominator: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("conformity violation: {0}")]
    Conformity(String),

    #[error("ill-posed problem: {0}")]
    WellPosedness(String),

    #[error("singular linear system: {reason} (relative residual {residual:e})")]
    Singular { reason: String, residual: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("index ({row}, {col}) out of range for dimension {n}")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    /// Precondition violated by the caller.
    #[error("logic error: {0}")]
    Logic(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

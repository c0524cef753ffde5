use std::fmt;

/// Errors produced by mesh handling, constitutive models and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("angle condition violated: {offenders} element(s), worst angle {worst_angle:.6} rad")]
    Acuteness { offenders: usize, worst_angle: f64 },

    #[error("invalid model: {0}")]
    ModelInvalid(String),

    #[error("quadrature failed on [{a}, {b}]: {msg}")]
    Quadrature { a: f64, b: f64, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("step {step}: {msg}")]
    Step { step: usize, msg: String },
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl fmt::Display) -> Self {
        Error::Parse { line, msg: msg.to_string() }
    }

    pub(crate) fn invalid(msg: impl fmt::Display) -> Self {
        Error::InvalidArgument(msg.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

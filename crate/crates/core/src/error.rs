use thiserror::Error;

/// Errors raised by the numerical kernels and the configuration loader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("missing required config keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {message}")]
    Constraint { key: String, message: String },

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("gamma function pole at z = {0}")]
    Pole(f64),

    #[error("grid too coarse: dx = {dx:.3e} exceeds {max_dx:.3e}; need at least {required_points} grid points")]
    Resolution {
        dx: f64,
        max_dx: f64,
        required_points: usize,
    },

    #[error("ODE step size underflow at x = {x}")]
    Stiffness { x: f64 },

    #[error("window too close to a turning point: condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

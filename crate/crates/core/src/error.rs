use std::path::PathBuf;

use thiserror::Error;

/// A configuration problem, located in the source file when possible.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", render_config_error(.line, .key, .message))]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

fn render_config_error(line: &Option<usize>, key: &str, message: &str) -> String {
    match line {
        Some(l) => format!("line {l}: `{key}`: {message}"),
        None if key.is_empty() => message.to_string(),
        None => format!("`{key}`: {message}"),
    }
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            line: None,
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn at(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("divergent moment: order {k} with exponent {nu} gives k + nu + 1 = {} <= 0", .k + .nu + 1.0)]
    DivergentMoment { k: f64, nu: f64 },

    #[error("divergent constant: p = {p} is not below the integrability threshold {p_max}")]
    DivergentConstant { p: f64, p_max: f64 },

    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("step size underflow at t = {time} (dt = {dt:e}); the solution is not resolvable with an explicit step")]
    Stiffness { time: f64, dt: f64 },

    #[error("fixed-point iteration did not contract after {iterations} iterations (last difference {residual:e})")]
    Contraction { iterations: usize, residual: f64 },

    #[error("input error: {0}")]
    Input(String),

    #[error("quadrature did not converge on [{a}, {b}] (estimate {estimate}, error {error:e})")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerical method itself (step underflow,
    /// non-contracting fixed point).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Stiffness { .. } | Error::Contraction { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

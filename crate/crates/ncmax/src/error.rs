use thiserror::Error;

/// Library-wide error type. `Certificate` is the only variant that maps to
/// exit code 2 in the CLI; everything else is exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid exponent window: {0}")]
    Window(String),

    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),

    #[error("divergent integral: {0}")]
    Divergence(String),

    #[error("certificate violation: {0}")]
    Certificate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn window(msg: impl Into<String>) -> Self {
        Error::Window(msg.into())
    }

    pub fn certificate(msg: impl Into<String>) -> Self {
        Error::Certificate(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Tolerance used by every `<=`-style inequality check: the left-hand side may
/// exceed the right-hand side by `rel * |rhs| + abs`.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel: 1e-9,
            abs: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn with_rel(rel: f64) -> Self {
        Tolerance { rel, abs: 1e-12 }
    }

    /// `lhs <= rhs` up to the slack.
    pub fn leq(&self, lhs: f64, rhs: f64) -> bool {
        lhs <= rhs + self.rel * rhs.abs() + self.abs
    }

    /// Signed slack of `lhs <= rhs`; negative values mean the check passed
    /// with room to spare.
    pub fn excess(&self, lhs: f64, rhs: f64) -> f64 {
        lhs - rhs - self.rel * rhs.abs() - self.abs
    }
}

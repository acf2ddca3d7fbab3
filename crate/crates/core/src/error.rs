use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate conditioning vector: smallest covariance eigenvalue {smallest_eigenvalue:e} below threshold {threshold:e}")]
    DegenerateCovariance {
        smallest_eigenvalue: f64,
        threshold: f64,
    },

    #[error("covariance is not positive semidefinite: eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("matrix is not simple: eigenvalue gap {gap:e} below tolerance {tol:e}")]
    DegenerateInput { gap: f64, tol: f64 },

    #[error("critical point search incomplete: found {found} of {expected} points")]
    IncompleteSearch { found: usize, expected: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature did not converge: achieved error estimate {achieved:e}, requested {requested:e}")]
    NonConvergence { achieved: f64, requested: f64 },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

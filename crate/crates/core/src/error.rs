use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation and optimization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("placement failed for {what} after {attempts} attempts")]
    Placement { what: String, attempts: usize },

    #[error("distance must be positive, got {0} km")]
    NonPositiveDistance(f64),

    #[error("{what} too large: {size} exceeds limit {limit}")]
    TooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("user {user} has zero rate under every pattern")]
    Infeasible { user: usize },

    #[error("allocation solver stopped after {iterations} iterations with gap {gap:e}")]
    NotConverged {
        iterations: usize,
        gap: f64,
        allocation: Vec<f64>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

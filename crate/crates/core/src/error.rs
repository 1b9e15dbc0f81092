use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is not defined for this configuration.
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric routine failed to meet its own accuracy contract.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A NaN or infinity reached a tree statistic.
    #[error("corrupted statistic: {0}")]
    Corruption(String),

    #[error("environment error: {0}")]
    Environment(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("belief collapse: no particle matched the observation after {attempts} attempts")]
    BeliefCollapse { attempts: usize },

    #[error("instance too large: {size} leaves exceeds the limit of {limit}")]
    SizeGuard { size: u64, limit: u64 },

    #[error("trace length {got} does not match {expected} simulations")]
    TraceMismatch { expected: usize, got: usize },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(line: usize, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}

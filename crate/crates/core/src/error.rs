use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The requested heterogeneity lies outside the range the convergence
    /// guarantees cover. Rejected rather than silently accepted.
    #[error("delta2 = {delta2} is not below 1/12; the trust-score convergence guarantee requires delta2 <= 1/12")]
    HeterogeneityBeyondGuarantee { delta2: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("no honest workers available for the {0} attack")]
    NoHonestWorkers(&'static str),

    #[error("simplex of dimension {0} is too large for exhaustive enumeration (max 4)")]
    SimplexTooLarge(usize),

    #[error("config error: {0}")]
    Config(#[from] crate::io::config::ConfigError),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use std::path::PathBuf;

/// Errors raised by the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("anisotropic model requires covariance_lag")]
    AnisotropicModel,

    #[error("n not a sum of two squares (n = {0})")]
    NotSumOfTwoSquares(u64),

    #[error("degenerate field: {nudged} of {total} grid vertices needed nudging")]
    DegenerateField { nudged: usize, total: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("empty measure: no included components ({ledger})")]
    EmptyMeasure { ledger: String },

    #[error("Kac-Rice nondegeneracy violated: {0}")]
    KacRiceDegenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

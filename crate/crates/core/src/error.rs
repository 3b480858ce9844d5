use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("degenerate statistic: context norm is zero")]
    DegenerateStatistic,

    #[error("no identifiable statistic: both signed fits are degenerate")]
    NoIdentifiableStatistic,

    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("negative kernel radicand {0:e}; kernel is not positive semi-definite")]
    NegativeRadicand(f64),

    #[error("infeasible constraint set")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex did not converge within {0} pivots")]
    IterationLimit(usize),

    #[error("instance too large for exact solve: n = {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("retrieval stayed infeasible after relaxing rho to {effective_rho}")]
    PersistentInfeasibility {
        effective_rho: f64,
        trace: Box<crate::mopr::MoprTrace>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

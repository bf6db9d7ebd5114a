//! Error type shared across the crate.

/// Errors produced by dataset construction, estimation, inference, and the
/// placebo engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose dimensions or orderings do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Invalid data values (NaN/Inf, duplicate identifiers, malformed CSV).
    #[error("invalid data: {0}")]
    Data(String),

    /// The control matrix is rank deficient under the active weights.
    #[error("rank-deficient controls: column {column} is linearly dependent on the others")]
    Rank { column: String },

    /// The partialled-out regressor has no variation left.
    #[error("degenerate regressor: the shift-share covariate is collinear with the controls")]
    DegenerateRegressor,

    /// The instrument is orthogonal to the treatment; the IV point estimate is
    /// undefined. The AKM0 confidence set is still available via
    /// [`crate::infer::ci_akm0_weak_iv`].
    #[error("weak instrument: the instrument is orthogonal to the treatment, point estimate undefined")]
    WeakInstrumentDegenerate,

    /// AKM-type inference needs N >= S and a full-column-rank share matrix.
    #[error("AKM inference infeasible: {0}")]
    AkmInfeasible(String),

    /// Cluster-robust inference was requested with an unusable cluster map.
    #[error("cluster error: {0}")]
    Cluster(String),

    /// A leave-one-out shifter estimate has an empty donor pool.
    #[error("leave-one-out shifter undefined for sector {sector} when excluding region {region}")]
    LeaveOneOutUndefined { sector: String, region: String },

    /// A data-generating process was configured with invalid parameters.
    #[error("DGP error: {0}")]
    Dgp(String),

    /// A placebo replication failed; carries the replication index.
    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(format!("CSV error: {e}"))
    }
}

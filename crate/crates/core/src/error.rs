use thiserror::Error;

/// Errors raised across the estimation, identification and simulation layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or lengths of inputs disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The regression design does not have full column rank.
    #[error("singular design: {0}")]
    SingularDesign(String),

    /// The interior-point solver hit its iteration cap.
    #[error("no convergence after {iterations} iterations (duality gap {gap:e})")]
    Convergence { iterations: usize, gap: f64 },

    /// The density-weighted Gram matrix of the sandwich covariance is numerically singular.
    #[error("near-singular covariance: {0}")]
    NearSingularCovariance(String),

    /// Every grid point of a Wald profile was invalid.
    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    /// Too many subsample estimates failed for the variance to be trusted.
    #[error("unreliable variance: {failed} of {total} subsamples failed")]
    UnreliableVariance { failed: usize, total: usize },

    /// A (treatment, instrument) cell in the support has too few observations.
    #[error("insufficient data in cell d={d}, z={z}: {count} observations (need {required})")]
    InsufficientCellData {
        d: f64,
        z: f64,
        count: usize,
        required: usize,
    },

    /// A column expected to be discrete takes too many values.
    #[error("column `{column}` is not discrete ({levels} distinct values, limit {limit})")]
    NotDiscrete {
        column: String,
        levels: usize,
        limit: usize,
    },

    /// The requested parameter region is not a supported polytope.
    #[error("unsupported region shape: {0}")]
    UnsupportedShape(String),

    /// A data-generating process violates a model condition.
    #[error("invalid data-generating process: {0}")]
    InvalidDgp(String),

    /// No market-clearing price could be bracketed.
    #[error("no equilibrium price bracket for observation {observation}")]
    Equilibrium { observation: usize },

    /// An empty instrument cell in a validator or scan.
    #[error("empty cell: {0}")]
    EmptyCell(String),
}

pub type Result<T> = std::result::Result<T, Error>;

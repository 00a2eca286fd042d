use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum WkccError {
    #[error("quantiles are not non-decreasing (index {index}: {prev} > {next})")]
    NonMonotoneQuantiles { index: usize, prev: f64, next: f64 },
    #[error("quantile value {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("reference measure quantiles must be strictly increasing (index {index})")]
    NonStrictReference { index: usize },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate data: total variation is zero")]
    DegenerateData,
    #[error("requested dimension {requested} exceeds maximum {max}")]
    DimensionTooLarge { requested: usize, max: usize },
    #[error("score solver failed: KKT residual {residual} after {iters} iterations")]
    SolverFailure { residual: f64, iters: usize },
    #[error("too few points: {n} points for {k} clusters")]
    TooFewPoints { n: usize, k: usize },
    #[error("cluster {cluster} fell below the minimum size {min}")]
    EmptyCluster { cluster: usize, min: usize },
    #[error("partitions have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("silhouette is undefined for a single cluster")]
    SingleCluster,
    #[error("empty sample set {id}")]
    EmptySamples { id: String },
    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("missing or malformed header: {0}")]
    MissingHeader(String),
    #[error("row {id} has {found} quantile columns, expected {expected}")]
    ColumnCountMismatch { id: String, found: usize, expected: usize },
    #[error("unknown simulation design {0}")]
    UnknownDesign(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid theory specification: {0}")]
    SpecError(String),
    #[error("matrices have different dimensions ({a} vs {b})")]
    DimensionMismatch { a: usize, b: usize },
    #[error("reference covariance is singular or not positive-definite")]
    SingularReference,
    #[error("fixed-point iteration did not converge (residual {residual} after {iters} iterations)")]
    NoConvergence { residual: f64, iters: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WkccError>;

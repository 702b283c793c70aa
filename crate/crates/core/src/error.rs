//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factor `{factor}` must declare at least 2 levels")]
    TooFewLevels { factor: String },

    #[error("factor `{factor}` declares duplicate level `{level}`")]
    DuplicateLevel { factor: String, level: String },

    #[error("unknown level `{label}` for factor `{factor}` (declared levels: {declared:?})")]
    UnknownLevel {
        factor: String,
        label: String,
        declared: Vec<String>,
    },

    #[error("factor `{factor}` has fewer than 2 observed levels; it cannot contribute a monotone effect")]
    TooFewObservedLevels { factor: String },

    #[error("column `{0}` not found in the observation table")]
    MissingColumn(String),

    #[error("column `{column}` is not {expected}")]
    ColumnKind { column: String, expected: &'static str },

    #[error("design matrix is rank deficient; dependent columns: {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("intercept requested for a Cox model; the partial likelihood has no intercept")]
    InterceptUnderCox,

    #[error("response must be binary (0/1); found {found} at row {row}")]
    NonBinaryResponse { row: usize, found: f64 },

    #[error("event times must be positive; found {found} at row {row}")]
    NonPositiveTime { row: usize, found: f64 },

    #[error("no events in the data; the partial likelihood is undefined")]
    NoEvents,

    #[error("reduced Hessian is singular or indefinite (active set {active:?})")]
    SingularHessian { active: Vec<usize> },

    #[error("line search failed to find an acceptable step after {halvings} halvings")]
    LineSearchFailed { halvings: usize },

    #[error("infeasible point passed where feasibility is required: beta[{index}] = {value}")]
    Infeasible { index: usize, value: f64 },

    #[error("null specification is not nested in the alternative: {0}")]
    NotNested(String),

    #[error("fit did not converge (alternative: {alt}, null: {null})")]
    LrtFitFailed { alt: String, null: String },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("simulation count {n_sim} is too small; need at least {min}")]
    TooFewSimulations { n_sim: usize, min: usize },

    #[error("too many bootstrap replicates failed: {failed} of {total}")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("constraint set too large for enumeration: {size} > {limit}")]
    EnumerationGuard { size: usize, limit: usize },

    #[error("weights must be positive; found {found} at position {index}")]
    NonPositiveWeight { index: usize, found: f64 },

    #[error("logistic fit diverged (coefficient norm {norm:.3e}); data are likely separated")]
    Separation { norm: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

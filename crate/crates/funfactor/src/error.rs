//! Error types for each pipeline stage.

use thiserror::Error;

/// Problems detected while validating raw longitudinal data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("dataset needs at least two subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("subject {subject} has no observations")]
    EmptySubject { subject: String },
    #[error("subject {subject} has a non-finite {what} at row {row}")]
    NonFiniteValue {
        subject: String,
        what: &'static str,
        row: usize,
    },
    #[error(
        "subject {subject}: {rows} time points but a {nrows}x{ncols} value matrix (expected {rows}x{p})"
    )]
    DimensionMismatch {
        subject: String,
        rows: usize,
        nrows: usize,
        ncols: usize,
        p: usize,
    },
    #[error("variable name list has {got} entries for p = {p} variables")]
    VariableNameMismatch { got: usize, p: usize },
}

/// Problems building the penalized spline basis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("need at least two distinct observation times to place knots, got {0}")]
    DegenerateTimes(usize),
    #[error(
        "curvature penalty has {got} positive eigenvalues, expected {expected} (threshold {threshold:.3e})"
    )]
    PenaltyRank {
        got: usize,
        expected: usize,
        threshold: f64,
    },
}

/// Numerical failures during variational inference.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("{context}: matrix not positive definite even after one jitter of {jitter:.3e}")]
    NotPositiveDefinite { context: String, jitter: f64 },
    #[error("{context}: inverse-Gamma factor has non-positive shape {shape} or rate {rate}")]
    NonPositiveIg {
        context: String,
        shape: f64,
        rate: f64,
    },
    #[error("temperature schedule invalid: {0}")]
    BadSchedule(String),
    #[error("ELBO became non-finite at sweep {sweep} (T = {temperature})")]
    NonFiniteElbo { sweep: usize, temperature: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

/// Problems while generating synthetic data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(
        "factor {factor}: random eigenfunction draws stayed numerically dependent after {attempts} attempts"
    )]
    RankDeficiency { factor: usize, attempts: usize },
}

/// Failures while rotating factors into interpretable form.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocessError {
    #[error("factor {factor} is numerically degenerate: all grid eigenvalues below {threshold:.3e}")]
    DegenerateFactor { factor: usize, threshold: f64 },
    #[error("dense evaluation grid needs at least two points, got {0}")]
    GridTooSmall(usize),
}

/// Failures while scoring a fit against simulation truth.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("curves live on different grids ({0} vs {1} points)")]
    GridMismatch(usize, usize),
    #[error("AUC undefined: labels are all {}", if *.0 { "positive" } else { "negative" })]
    DegenerateLabels(bool),
    #[error("fit and truth disagree on {what}: {fit} vs {truth}")]
    Mismatch {
        what: &'static str,
        fit: usize,
        truth: usize,
    },
}

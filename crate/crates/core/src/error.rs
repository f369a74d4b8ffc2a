use thiserror::Error;

/// Which simulation bound was hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapKind {
    Nodes,
    Levels,
    Steps,
}

impl std::fmt::Display for CapKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CapKind::Nodes => f.write_str("nodes"),
            CapKind::Levels => f.write_str("levels"),
            CapKind::Steps => f.write_str("steps"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid offspring law: {0}")]
    InvalidLaw(String),
    #[error("type index {ty} out of range for d = {d}")]
    TypeOutOfRange { ty: usize, d: usize },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("simulation cap exceeded ({kind}, limit {limit}); retry or raise the cap")]
    CapExceeded { kind: CapKind, limit: u64 },
    #[error("forest roots carry more than one type; use build_allele_forest")]
    MixedRootTypes,
    #[error("truncation captured only {captured:.6} of the mass")]
    CapTooSmall { captured: f64 },
    #[error("fixed point did not converge after {iterations} iterations (last {last}, residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
    },
    #[error("argument outside the domain{}: {detail}", .component.map(|j| format!(" (component {j})")).unwrap_or_default())]
    DomainError {
        component: Option<usize>,
        detail: String,
    },
    #[error("conditioning event observed {count} times, need at least {needed}")]
    InsufficientData { count: usize, needed: usize },
    #[error("contingency table has fewer than two usable cells")]
    DegenerateTable,
    #[error("enumeration bound {max_total} exceeds the limit {limit}")]
    TooLarge { max_total: usize, limit: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

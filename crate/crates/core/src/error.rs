use thiserror::Error;

/// Errors raised by the transport library.
///
/// Diagnostic operations (plan checks, foliation checks) never return these
/// for a failed check; they return a report instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OtError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid metric space: {0}")]
    InvalidSpace(String),
    #[error("invalid group action: {0}")]
    InvalidAction(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("lattice does not cover the support: {0}")]
    CoverageFailure(String),
    #[error("missing conditional at {0}")]
    MissingConditional(String),
    #[error("invalid comparison: {0}")]
    InvalidComparison(String),
    #[error("no map realises the class: {0}")]
    InfeasibleClass(String),
    #[error("resource limit: {0}")]
    ResourceLimit(String),
    #[error("gluing marginals differ: {0}")]
    GlueMismatch(String),
}

pub type Result<T> = std::result::Result<T, OtError>;

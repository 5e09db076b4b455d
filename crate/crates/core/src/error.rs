use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("indeterminate sum +inf + (-inf)")]
    IndeterminateSum,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("the specified set is empty")]
    EmptySet,
    #[error("point does not belong to the set")]
    PointNotInSet,
    #[error("vector is not a normal to the set at the given point")]
    NotANormal,
    #[error("direction is not tangent")]
    NotTangent,
    #[error("direction is not critical")]
    NotCritical,
    #[error("jacobian of the reduction map is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error("multiplier set is empty: MSCQ violated or v is not a normal to the constraint set")]
    EmptyMultiplierSet,
    #[error("base point is infeasible (residual {0:e})")]
    InfeasiblePoint(f64),
    #[error("no Lagrange multipliers exist at the base point")]
    NoMultipliers,
    #[error("KKT system violated (residual {0:e})")]
    KktViolated(f64),
    #[error("penalty parameter must be positive, got {0}")]
    NonpositiveRho(f64),
    #[error("operation requires a convex catalog set")]
    NonConvexUnsupported,
    #[error("matrix is not symmetric (form {index}, asymmetry {asymmetry:e})")]
    NotSymmetric { index: usize, asymmetry: f64 },
    #[error("tolerances must be strictly positive")]
    InvalidTolerance,
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

//! Piecewise linear-quadratic penalties, named scalar losses and constraint
//! sets.

use alloc::string::String;

use thiserror::Error;

mod constraint;
mod loss;
mod penalty;

pub use constraint::ConstraintSet;
pub use loss::ScalarLoss;
pub use penalty::PlqPenalty;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlqError {
    #[error("invalid loss parameter in `{0}`")]
    InvalidParameter(String),
    #[error("cannot parse loss: {0}")]
    Parse(String),
    #[error("inconsistent dimensions")]
    DimensionMismatch,
    #[error("B is not injective")]
    NotInjective,
    #[error("h has a negative entry, so 0 is not in V")]
    OriginOutsideDualSet,
    #[error("M is not symmetric positive semidefinite")]
    NotPsd,
    #[error("constraint set is empty")]
    EmptySet,
    #[error("projection onto a general polyhedron is not implemented")]
    NotImplemented,
}

//! Exact truncated multivariate power series and the algebra built on them.

pub mod context;
pub mod ift;
pub mod linalg;
pub mod map;
pub mod rank;
pub mod scalar;
pub mod truncated;

use thiserror::Error;

pub use context::{multidegrees_of_degree, multidegrees_up_to, Multidegree, VariableContext};
pub use ift::formal_ift;
pub use linalg::Matrix;
pub use map::{jet_component_count, SeriesMap};
pub use rank::{generic_rank_matrix, rank_at_point, RankReport};
pub use scalar::{binomial, factorial, GaussianRational, Gq, Rational};
pub use truncated::{ArithKind, Series, TruncatedSeries, EXACT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("context mismatch: {left} vs {right}")]
    ContextMismatch { left: String, right: String },
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("argument {0} of a composition has a nonzero constant term")]
    NonzeroConstantArgument(usize),
    #[error("series has zero constant term")]
    ZeroConstantTerm,
    #[error("divisor vanishes through degree {order}")]
    ZeroDivisor { order: i32 },
    #[error("not divisible (remainder at degree {degree})")]
    NotDivisible { degree: u32 },
    #[error("variable {0} has no image")]
    UnmappedVariable(String),
    #[error("duplicate variable {0}")]
    DuplicateVariable(String),
    #[error("linear block of the implicit system is singular")]
    IftSingular,
    #[error("implicit system does not vanish at the origin")]
    IftNonzeroConstant,
    #[error("jet order {ell} exceeds series order {order}")]
    JetOrderTooLarge { ell: u32, order: i32 },
    #[error("precision exhausted: need {needed} derivatives, order is {order}")]
    OrderExhausted { needed: u32, order: i32 },
}

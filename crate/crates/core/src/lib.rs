//! Exact truncated power series and the reflection machinery for formal CR
//! maps between generic real-analytic submanifolds.
//!
//! Everything works at a fixed truncation order over the Gaussian
//! rationals, so every identity is checked bit-exactly.

pub mod expr;
pub mod generate;
pub mod manifold;
pub mod nondegen;
pub mod reflection;
pub mod segre;
pub mod series;

pub use series::{Gq, Multidegree, Rational, SeriesError, SeriesMap, TruncatedSeries, VariableContext};

//! Solvers for quadratic penalty programs
//!
//! ```text
//! min f(x) + ‖c(x)‖² / (2ω)   s.t.  g(x) ≥ 0
//! ```
//!
//! with a modified augmented Lagrangian method, the classical method of
//! multipliers (ω = 0), and direct or continued quadratic penalty solves.
//! Subproblems are handled by an interior-point method in [`inner`].

pub mod deriv_check;
pub mod error;
pub mod inner;
pub mod linalg;
pub mod nlp;
pub mod outer;
pub mod problems;
pub mod rate;

pub use error::{ConfigError, EvalError, RateError};
pub use nlp::{Dims, MultiplierPair, NlpProblem, PenaltyWeight};

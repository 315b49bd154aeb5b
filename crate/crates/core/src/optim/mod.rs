//! Numerical solvers used by the designers.

pub mod auglag;
pub mod lbfgs;
pub mod lm;

pub use auglag::{AlOutcome, AugmentedLagrangian, ConstraintBlock, EqualityProgram};
pub use lbfgs::{BoxLbfgs, MinimizeOutcome};
pub use lm::{LevenbergMarquardt, LmOutcome};

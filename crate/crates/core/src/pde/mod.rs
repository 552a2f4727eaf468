//! Monotone finite-difference solvers on a truncated box.

mod discounted;
mod ergodic;
mod field;
mod grid;
mod howard;
mod linear;
mod operator;
mod parabolic;
mod penalized;

pub use discounted::{solve_discounted, solve_discounted_from, DEFAULT_MAX_ITER};
pub use ergodic::{
    ergodic_residual, extract_feedback, solve_ergodic_vanishing_discount, solve_ergodic_with, ErgodicOptions,
    PhiEstimate,
};
pub use field::{ErgodicPair, FieldKind, Policy, SolveInfo, ValueField};
pub(crate) use field::write_json as write_json_file;
pub use grid::{BoundaryPolicy, Grid};
pub use operator::discrete_generator_apply;
pub use parabolic::{explicit_dt_limit, solve_parabolic, solve_parabolic_with, ParabolicOptions, TimeStepping};
pub use penalized::solve_penalized_system;

//! Solvers for discounted, parabolic and ergodic HJB equations driven by
//! dissipative controlled diffusions, with a regression Monte Carlo route
//! through penalized BSDEs and tools for the long-time behaviour.

pub mod asymptotics;
pub mod bsde;
pub mod error;
pub mod model;
pub mod pde;
pub mod run;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{ControlProblem, ProblemBuilder};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("drift matrix not uniformly stable: x.B(a)x/|x|^2 = {quotient:.6} > -gamma = {bound:.6} (control {control})")]
    StabilityViolated {
        control: usize,
        quotient: f64,
        bound: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {0} is not on the simulation grid")]
    OffGrid(f64),

    #[error("stencil leaves the grid at node {node} along dimension {dim}")]
    StencilLeavesGrid { node: usize, dim: usize },

    #[error("monotonicity lost at node {node}, control {control}: off-diagonal coefficient {coefficient:.3e}")]
    MonotonicityLost {
        node: usize,
        control: usize,
        coefficient: f64,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("explicit step dt = {dt:.3e} exceeds the monotone bound {limit:.3e}")]
    CflViolated { dt: f64, limit: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("trajectory left the blow-up radius {radius:.3e} at t = {time:.4}")]
    BlowUp { radius: f64, time: f64 },

    #[error("ill-conditioned regression at step {step}: condition number {condition:.3e}")]
    IllConditioned { step: usize, condition: f64 },

    #[error("insufficient samples: {have} available, {need} required ({what})")]
    InsufficientSamples {
        have: usize,
        need: usize,
        what: &'static str,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

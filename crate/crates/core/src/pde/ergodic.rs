//! Ergodic pair by vanishing discount: `λ_β = β v^β(anchor)` and
//! `φ^β = v^β − v^β(anchor)` along a decreasing schedule of `β`.

use log::warn;
use serde::{Deserialize, Serialize};

use super::discounted::{howard_discounted, DEFAULT_MAX_ITER};
use super::field::{ErgodicPair, Policy};
use super::grid::Grid;
use super::howard::{hamiltonian, Nodes};
use super::operator::assemble_all;
use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::stats::{extrapolate_to_zero, linear_fit};

/// How `φ` is read off the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PhiEstimate {
    /// `φ^β` at the smallest `β`.
    SmallestBeta,
    /// Nodewise quadratic extrapolation to `β = 0` through the last three `φ^β`.
    #[default]
    Extrapolated,
}

#[derive(Debug, Clone, Copy)]
pub struct ErgodicOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub phi: PhiEstimate,
    /// Slack before a reversal in the `λ_β` sequence is reported.
    pub monotone_slack: f64,
}

impl ErgodicOptions {
    pub fn new(tol: f64) -> Self {
        Self { tol, max_iter: DEFAULT_MAX_ITER, phi: PhiEstimate::default(), monotone_slack: 1e-6 }
    }
}

pub fn solve_ergodic_vanishing_discount(
    problem: &ControlProblem,
    grid: &Grid,
    beta_schedule: &[f64],
    tol: f64,
) -> Result<ErgodicPair> {
    solve_ergodic_with(problem, grid, beta_schedule, &ErgodicOptions::new(tol))
}

pub fn solve_ergodic_with(
    problem: &ControlProblem,
    grid: &Grid,
    beta_schedule: &[f64],
    opts: &ErgodicOptions,
) -> Result<ErgodicPair> {
    if beta_schedule.len() < 3 {
        return Err(Error::InvalidArgument("the discount schedule needs at least three values".into()));
    }
    if beta_schedule.iter().any(|b| !(*b > 0.0 && b.is_finite())) || beta_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "discount schedule must be positive and strictly decreasing, got {beta_schedule:?}"
        )));
    }
    let ops = assemble_all(problem, grid)?;
    let nodes = Nodes::new(grid);
    let anchor = grid.anchor();

    let mut lambda_betas = Vec::with_capacity(beta_schedule.len());
    let mut phis: Vec<Vec<f64>> = Vec::with_capacity(beta_schedule.len());
    let mut warm: Option<Vec<f64>> = None;
    let mut prev_beta = beta_schedule[0];
    for &beta in beta_schedule {
        // β v^β is roughly β-independent, so rescale the previous solution
        let init = warm.take().map(|v| v.iter().map(|x| x * prev_beta / beta).collect::<Vec<_>>());
        let (v, _) = howard_discounted(problem, grid, &nodes, &ops, beta, opts.tol, opts.max_iter, init.as_deref())?;
        let at_anchor = v[anchor];
        lambda_betas.push(beta * at_anchor);
        phis.push(v.iter().map(|x| x - at_anchor).collect());
        warm = Some(v);
        prev_beta = beta;
    }

    let k = beta_schedule.len();
    let tail_b = &beta_schedule[k - 3..];
    let tail_l = &lambda_betas[k - 3..];
    let (lambda, _) = linear_fit(tail_b, tail_l);

    let phi: Vec<f64> = match opts.phi {
        PhiEstimate::SmallestBeta => phis[k - 1].clone(),
        PhiEstimate::Extrapolated => (0..grid.len())
            .map(|n| extrapolate_to_zero(tail_b, &[phis[k - 3][n], phis[k - 2][n], phis[k - 1][n]]))
            .collect(),
    };

    let mut warnings = Vec::new();
    let steps: Vec<f64> = lambda_betas.windows(2).map(|w| w[1] - w[0]).collect();
    let rising = steps.iter().any(|s| *s > opts.monotone_slack);
    let falling = steps.iter().any(|s| *s < -opts.monotone_slack);
    if rising && falling {
        let msg = format!("lambda_beta is not monotone along the schedule: {lambda_betas:?}");
        warn!("{msg}");
        warnings.push(msg);
    }

    let mut pair = ErgodicPair {
        lambda,
        grid: grid.clone(),
        phi,
        anchor,
        residual: f64::NAN,
        betas: beta_schedule.to_vec(),
        lambda_betas,
        warnings,
    };
    pair.residual = ergodic_residual(problem, grid, &pair)?;
    Ok(pair)
}

/// `max |λ − sup_a [L^a_h φ + f(x, a, λ)]|` over interior nodes.
pub fn ergodic_residual(problem: &ControlProblem, grid: &Grid, pair: &ErgodicPair) -> Result<f64> {
    check_pair(grid, pair)?;
    let ops = assemble_all(problem, grid)?;
    let nodes = Nodes::new(grid);
    let lambda = pair.lambda;
    let ham = hamiltonian(problem, &nodes, &ops, &pair.phi, &|_| lambda);
    Ok(ham
        .iter()
        .enumerate()
        .filter(|(n, _)| !grid.is_boundary(*n))
        .map(|(_, (_, h))| (lambda - h).abs())
        .fold(0.0, f64::max))
}

/// Argmax of `L^a_h φ + f(x, a, λ)` per node, ties to the lowest index.
pub fn extract_feedback(problem: &ControlProblem, grid: &Grid, pair: &ErgodicPair) -> Result<Policy> {
    check_pair(grid, pair)?;
    let ops = assemble_all(problem, grid)?;
    let nodes = Nodes::new(grid);
    let lambda = pair.lambda;
    let controls = hamiltonian(problem, &nodes, &ops, &pair.phi, &|_| lambda).into_iter().map(|(a, _)| a).collect();
    Ok(Policy::new(grid.clone(), controls))
}

fn check_pair(grid: &Grid, pair: &ErgodicPair) -> Result<()> {
    if pair.phi.len() != grid.len() || pair.grid != *grid {
        return Err(Error::InvalidArgument("ergodic pair does not live on this grid".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(cost: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = -x[0])
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .running_cost(move |x, _, _| cost(x[0]))
            .gamma(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn quadratic_cost_pair() {
        let grid = Grid::uniform_1d(-6.0, 6.0, 0.01).unwrap();
        let pair = solve_ergodic_vanishing_discount(&ou(|x| x * x), &grid, &[0.4, 0.2, 0.1, 0.05], 1e-9).unwrap();
        assert!((pair.lambda - 1.0).abs() < 1e-2);
        assert_eq!(pair.phi[pair.anchor], 0.0);
        for x in [-3.0, -1.5, 0.5, 3.0] {
            assert!((pair.phi_at(&[x]) - x * x / 2.0).abs() < 5e-2);
        }
        assert!(pair.residual < 0.05);
        assert!(pair.warnings.is_empty());
    }

    #[test]
    fn constant_cost_pair() {
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.05).unwrap();
        let pair = solve_ergodic_vanishing_discount(&ou(|_| 0.7), &grid, &[0.4, 0.2, 0.1], 1e-11).unwrap();
        assert!((pair.lambda - 0.7).abs() < 1e-9);
        assert!(pair.phi.iter().all(|p| p.abs() < 1e-8));
        let exact = ErgodicPair { lambda: 0.7, phi: vec![0.0; grid.len()], ..pair.clone() };
        assert_eq!(ergodic_residual(&ou(|_| 0.7), &grid, &exact).unwrap(), 0.0);
    }

    #[test]
    fn non_solution_has_large_residual() {
        let grid = Grid::uniform_1d(-6.0, 6.0, 0.01).unwrap();
        let p = ou(|x| x * x);
        let pair = solve_ergodic_vanishing_discount(&p, &grid, &[0.4, 0.2, 0.1], 1e-9).unwrap();
        let zero = ErgodicPair { lambda: 0.0, phi: vec![0.0; grid.len()], ..pair };
        let r = ergodic_residual(&p, &grid, &zero).unwrap();
        assert!((r - 5.99f64.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn schedule_validated() {
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.1).unwrap();
        let p = ou(|x| x * x);
        assert!(solve_ergodic_vanishing_discount(&p, &grid, &[0.4, 0.2], 1e-8).is_err());
        assert!(solve_ergodic_vanishing_discount(&p, &grid, &[0.4, 0.4, 0.1], 1e-8).is_err());
        assert!(solve_ergodic_vanishing_discount(&p, &grid, &[0.4, 0.2, -0.1], 1e-8).is_err());
    }

    #[test]
    fn singleton_feedback_is_constant() {
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.1).unwrap();
        let p = ou(|x| x * x);
        let pair = solve_ergodic_vanishing_discount(&p, &grid, &[0.4, 0.2, 0.1], 1e-9).unwrap();
        let policy = extract_feedback(&p, &grid, &pair).unwrap();
        assert!(policy.controls().iter().all(|&a| a == 0));
    }
}

//! Discounted HJB equation `β v − sup_a [L^a v + f(x, a, β v)] = 0` by Howard
//! policy iteration.
//!
//! Each policy evaluation linearizes `f` in `y` around the previous iterate,
//! `f(y) ≈ f(y_prev) + ∂_y f (y − y_prev)`, and moves the (nonpositive) slope to
//! the diagonal. Freezing `y` outright stalls when `f` decays in `y` at a rate
//! comparable to 1: the frozen map then has sup-norm factor `-∂_y f`.

use log::debug;

use super::field::{FieldKind, SolveInfo, ValueField};
use super::grid::Grid;
use super::howard::{hamiltonian, policy_rhs, Nodes};
use super::linear::solve_shifted_system;
use super::operator::{assemble_all, Operator};
use crate::error::{Error, Result};
use crate::model::ControlProblem;

pub const DEFAULT_MAX_ITER: usize = 500;

pub fn solve_discounted(problem: &ControlProblem, grid: &Grid, beta: f64, tol: f64, max_iter: usize) -> Result<ValueField> {
    solve_discounted_from(problem, grid, beta, tol, max_iter, None)
}

/// Same as [`solve_discounted`], starting the iteration from `initial`.
pub fn solve_discounted_from(
    problem: &ControlProblem,
    grid: &Grid,
    beta: f64,
    tol: f64,
    max_iter: usize,
    initial: Option<&[f64]>,
) -> Result<ValueField> {
    check_args(beta, tol, max_iter)?;
    let ops = assemble_all(problem, grid)?;
    let nodes = Nodes::new(grid);
    let (values, info) = howard_discounted(problem, grid, &nodes, &ops, beta, tol, max_iter, initial)?;
    Ok(ValueField::new(grid.clone(), values, FieldKind::Discounted { beta }, info))
}

fn check_args(beta: f64, tol: f64, max_iter: usize) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("discount rate must be positive, got {beta}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidArgument("tolerance and iteration budget must be positive".into()));
    }
    Ok(())
}

/// Max over generator rows of `|β v − sup_a [L^a v + f(x, a, β v)]|`.
#[cfg(test)]
pub(crate) fn discounted_residual(problem: &ControlProblem, nodes: &Nodes, ops: &[Operator], beta: f64, v: &[f64]) -> f64 {
    residual_and_policy(problem, nodes, ops, beta, v).0
}

fn residual_and_policy(problem: &ControlProblem, nodes: &Nodes, ops: &[Operator], beta: f64, v: &[f64]) -> (f64, Vec<usize>) {
    let ham = hamiltonian(problem, nodes, ops, v, &|n| beta * v[n]);
    let residual = ham
        .iter()
        .enumerate()
        .filter(|(n, _)| !ops[0].rows[*n].is_fixed())
        .map(|(n, (_, h))| (beta * v[n] - h).abs())
        .fold(0.0, f64::max);
    (residual, ham.into_iter().map(|(a, _)| a).collect())
}

/// Central-difference `∂_y f(x, π(x), β v)`, clipped at 0 so the shifted
/// system stays an M-matrix. Exactly 0 when `f` ignores `y`.
fn y_slopes(problem: &ControlProblem, nodes: &Nodes, ops: &[Operator], policy: &[usize], beta: f64, v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|n| {
            if ops[0].rows[n].is_fixed() {
                return 0.0;
            }
            let y = beta * v[n];
            let dy = 1e-6 * (1.0 + y.abs());
            let x = nodes.x(n);
            let d = (problem.cost(x, policy[n], y + dy) - problem.cost(x, policy[n], y - dy)) / (2.0 * dy);
            d.min(0.0)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn howard_discounted(
    problem: &ControlProblem,
    grid: &Grid,
    nodes: &Nodes,
    ops: &[Operator],
    beta: f64,
    tol: f64,
    max_iter: usize,
    initial: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveInfo)> {
    let len = grid.len();
    let mut v = match initial {
        Some(init) if init.len() == len => init.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("initial guess does not match the grid".into())),
        None => vec![0.0; len],
    };
    let mut next = vec![0.0; len];
    let mut history = Vec::new();
    let mut policy: Vec<usize> = hamiltonian(problem, nodes, ops, &v, &|n| beta * v[n]).into_iter().map(|(a, _)| a).collect();
    for it in 1..=max_iter {
        let slope = y_slopes(problem, nodes, ops, &policy, beta, &v);
        let shift: Vec<f64> = slope.iter().map(|d| beta * (1.0 - d)).collect();
        let base = |n: usize| -slope[n] * beta * v[n];
        let rhs = policy_rhs(problem, nodes, ops, &policy, 1.0, &base, &|n| beta * v[n], &|_| 0.0);
        next.copy_from_slice(&v);
        solve_shifted_system(grid, ops, &policy, &shift, 1.0, &rhs, &mut next)?;
        let change = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = next.iter().map(|x| x.abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);

        let (residual, new_policy) = residual_and_policy(problem, nodes, ops, beta, &v);
        if !residual.is_finite() {
            return Err(Error::NonFinite("discounted policy iteration"));
        }
        history.push(residual);
        let stable = new_policy == policy;
        debug!("beta {beta}: sweep {it}, residual {residual:.3e}, change {change:.3e}");
        // A stable policy with a stalled value is a fixed point; what remains
        // of the residual is round-off in the 1/h² stencil.
        if residual <= tol || (stable && change <= tol * (1.0 + size)) {
            return Ok((v, SolveInfo { iterations: it, residual, residual_history: history }));
        }
        policy = new_policy;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: history.last().copied().unwrap_or(f64::NAN) })
}

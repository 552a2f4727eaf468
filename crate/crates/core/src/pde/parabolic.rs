//! Parabolic HJB equation `∂_T v − sup_a [L^a v + f(x, a, v/(T+1))] = 0`,
//! `v(0, ·) = h`, marched forward in the horizon variable.
//!
//! The implicit mode solves `v_{k+1} − dt sup_a [L^a v_{k+1} + f(x, a, y_k)] = v_k`
//! with `y_k = v_k / (T_k + 1)` by policy iteration at every step. The
//! explicit mode is the forward Euler step and needs the CFL bound.

use serde::{Deserialize, Serialize};

use super::field::{FieldKind, SolveInfo, ValueField};
use super::grid::Grid;
use super::howard::{hamiltonian, policy_rhs, Nodes};
use super::linear::solve_policy_system;
use super::operator::{assemble_all, Operator};
use crate::error::{Error, Result};
use crate::model::ControlProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeStepping {
    Explicit,
    #[default]
    Implicit,
}

#[derive(Debug, Clone, Copy)]
pub struct ParabolicOptions {
    pub dt: f64,
    pub stepping: TimeStepping,
    /// Policy-iteration cap per implicit step.
    pub max_policy_iter: usize,
}

impl ParabolicOptions {
    pub fn implicit(dt: f64) -> Self {
        Self { dt, stepping: TimeStepping::Implicit, max_policy_iter: 50 }
    }

    pub fn explicit(dt: f64) -> Self {
        Self { dt, stepping: TimeStepping::Explicit, max_policy_iter: 1 }
    }
}

/// Implicit march up to `t_max`, returning the fields at `record_times`
/// (in the order given).
pub fn solve_parabolic(
    problem: &ControlProblem,
    grid: &Grid,
    t_max: f64,
    dt: f64,
    record_times: &[f64],
) -> Result<Vec<ValueField>> {
    solve_parabolic_with(problem, grid, t_max, record_times, &ParabolicOptions::implicit(dt))
}

/// Largest explicit step keeping every row of `I + dt L^a` nonnegative.
pub fn explicit_dt_limit(problem: &ControlProblem, grid: &Grid) -> Result<f64> {
    let ops = assemble_all(problem, grid)?;
    Ok(cfl_limit(&ops))
}

fn cfl_limit(ops: &[Operator]) -> f64 {
    let worst = ops.iter().map(|o| o.max_abs_diag()).fold(0.0, f64::max);
    if worst == 0.0 {
        f64::INFINITY
    } else {
        1.0 / worst
    }
}

fn step_index(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon {t} must be finite and nonnegative")));
    }
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::OffGrid(t));
    }
    Ok(k as usize)
}

pub fn solve_parabolic_with(
    problem: &ControlProblem,
    grid: &Grid,
    t_max: f64,
    record_times: &[f64],
    opts: &ParabolicOptions,
) -> Result<Vec<ValueField>> {
    let dt = opts.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let n_steps = step_index(t_max, dt)?;
    let mut wanted = Vec::with_capacity(record_times.len());
    for &t in record_times {
        let k = step_index(t, dt)?;
        if k > n_steps {
            return Err(Error::InvalidArgument(format!("record time {t} beyond the horizon {t_max}")));
        }
        wanted.push(k);
    }
    let ops = assemble_all(problem, grid)?;
    if opts.stepping == TimeStepping::Explicit {
        let limit = cfl_limit(&ops);
        if dt > limit {
            return Err(Error::CflViolated { dt, limit });
        }
    }
    let nodes = Nodes::new(grid);
    let data: Vec<f64> = (0..grid.len()).map(|n| problem.data(nodes.x(n))).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial data"));
    }

    let mut out: Vec<Option<ValueField>> = vec![None; wanted.len()];
    let record = |k: usize, v: &[f64], info: &SolveInfo, out: &mut Vec<Option<ValueField>>| {
        for (slot, &w) in out.iter_mut().zip(&wanted) {
            if w == k {
                let kind = FieldKind::Parabolic { t: k as f64 * dt };
                *slot = Some(ValueField::new(grid.clone(), v.to_vec(), kind, info.clone()));
            }
        }
    };

    let mut v = data.clone();
    let mut info = SolveInfo::default();
    record(0, &v, &info, &mut out);
    let mut next = vec![0.0; v.len()];
    let mut policy: Vec<usize> = vec![0; v.len()];
    for k in 0..n_steps {
        let t_k = k as f64 * dt;
        let y: Vec<f64> = v.iter().map(|x| x / (t_k + 1.0)).collect();
        let iterations = match opts.stepping {
            TimeStepping::Explicit => {
                let ham = hamiltonian(problem, &nodes, &ops, &v, &|n| y[n]);
                for n in 0..v.len() {
                    next[n] = if ops[0].rows[n].is_fixed() { data[n] } else { v[n] + dt * ham[n].1 };
                }
                1
            }
            TimeStepping::Implicit => implicit_step(problem, grid, &nodes, &ops, dt, &v, &y, &data, &mut policy, &mut next, opts.max_policy_iter)?,
        };
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parabolic march"));
        }
        std::mem::swap(&mut v, &mut next);
        info.iterations += iterations;
        record(k + 1, &v, &info, &mut out);
    }
    Ok(out.into_iter().map(|f| f.expect("every record time is on the step grid")).collect())
}

#[allow(clippy::too_many_arguments)]
fn implicit_step(
    problem: &ControlProblem,
    grid: &Grid,
    nodes: &Nodes,
    ops: &[Operator],
    dt: f64,
    v: &[f64],
    y: &[f64],
    data: &[f64],
    policy: &mut Vec<usize>,
    next: &mut [f64],
    max_iter: usize,
) -> Result<usize> {
    *policy = hamiltonian(problem, nodes, ops, v, &|n| y[n]).into_iter().map(|(a, _)| a).collect();
    next.copy_from_slice(v);
    for it in 1..=max_iter {
        let rhs = policy_rhs(problem, nodes, ops, policy, dt, &|n| v[n], &|n| y[n], &|n| data[n]);
        solve_policy_system(grid, ops, policy, 1.0, dt, &rhs, next)?;
        let improved: Vec<usize> = hamiltonian(problem, nodes, ops, next, &|n| y[n]).into_iter().map(|(a, _)| a).collect();
        if improved == *policy {
            return Ok(it);
        }
        *policy = improved;
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou_quadratic() -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = -x[0])
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .running_cost(|x, _, _| x[0] * x[0])
            .gamma(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn zero_horizon_returns_data() {
        let p = ou_quadratic().with_data(std::sync::Arc::new(|x: &[f64]| x[0].sin()));
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.1).unwrap();
        let fields = solve_parabolic(&p, &grid, 0.0, 0.01, &[0.0]).unwrap();
        for n in 0..grid.len() {
            assert_eq!(fields[0].at_node(n), grid.coord(n, 0).sin());
        }
    }

    #[test]
    fn short_horizon_matches_moment_formula() {
        let grid = Grid::uniform_1d(-6.0, 6.0, 0.02).unwrap();
        let fields = solve_parabolic(&ou_quadratic(), &grid, 2.0, 0.001, &[1.0, 2.0]).unwrap();
        for (f, t) in fields.iter().zip([1.0f64, 2.0]) {
            let exact = t - (1.0 - (-2.0 * t).exp()) / 2.0;
            assert!((f.at(&[0.0]) - exact).abs() < 2e-3, "{} vs {exact}", f.at(&[0.0]));
        }
    }

    #[test]
    fn explicit_cfl_enforced() {
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.1).unwrap();
        let limit = explicit_dt_limit(&ou_quadratic(), &grid).unwrap();
        let too_big = ParabolicOptions::explicit(limit * 1.5);
        assert!(matches!(
            solve_parabolic_with(&ou_quadratic(), &grid, 0.0, &[], &too_big),
            Err(Error::CflViolated { .. })
        ));
        let dt = 1.0 / (1.0 / limit).ceil();
        let ok = solve_parabolic_with(&ou_quadratic(), &grid, 1.0, &[1.0], &ParabolicOptions::explicit(dt)).unwrap();
        let imp = solve_parabolic(&ou_quadratic(), &grid, 1.0, dt, &[1.0]).unwrap();
        assert!((ok[0].at(&[0.0]) - imp[0].at(&[0.0])).abs() < 1e-2);
    }

    #[test]
    fn off_grid_record_time_rejected() {
        let grid = Grid::uniform_1d(-3.0, 3.0, 0.1).unwrap();
        assert!(matches!(solve_parabolic(&ou_quadratic(), &grid, 1.0, 0.1, &[0.55]), Err(Error::OffGrid(_))));
    }
}

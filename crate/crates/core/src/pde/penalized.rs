//! Grid solver for the penalized regime system
//!
//! `β v_a − L^a v_a − M^a v − f(x, a, β v_a) − n Σ_{a'} ϑ({a'}) (v_{a'} − v_a)_+ = 0`,
//!
//! one equation per control, where `M^a v = Σ_{a'} ϑ({a'}) (v_{a'} − v_a)` is the
//! generator of the regime clock. This is the PDE counterpart of the penalized
//! BSDE; as `n → ∞` every `v_a` rises to the discounted HJB value.
//!
//! Block Gauss–Seidel over regimes: each regime is solved with the switching
//! set, the other regimes and the `y` argument frozen at their latest values.

use super::field::{FieldKind, SolveInfo, ValueField};
use super::grid::Grid;
use super::howard::Nodes;
use super::linear::solve_shifted_system;
use super::operator::assemble_all;
use crate::error::{Error, Result};
use crate::model::ControlProblem;

/// One field per control, in control order.
pub fn solve_penalized_system(
    problem: &ControlProblem,
    grid: &Grid,
    beta: f64,
    n: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<Vec<ValueField>> {
    if !(beta > 0.0) || !(n >= 0.0) || !(tol > 0.0) || max_sweeps == 0 {
        return Err(Error::InvalidArgument(format!(
            "penalized system needs beta > 0, n >= 0, tol > 0 (got {beta}, {n}, {tol})"
        )));
    }
    let ops = assemble_all(problem, grid)?;
    let nodes = Nodes::new(grid);
    let m = problem.n_controls();
    let len = grid.len();
    let theta = problem.control_rate();
    let mut v = vec![vec![0.0; len]; m];
    let mut shift = vec![0.0; len];
    let mut rhs = vec![0.0; len];
    let mut residual = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let mut change = 0.0_f64;
        let mut size = 0.0_f64;
        for a in 0..m {
            let policy = vec![a; len];
            for node in 0..len {
                if ops[a].rows[node].is_fixed() {
                    shift[node] = 1.0;
                    rhs[node] = 0.0;
                    continue;
                }
                let own = v[a][node];
                let mut coupling = 0.0;
                let mut pull = 0.0;
                for (b, vb) in v.iter().enumerate() {
                    if b != a {
                        let c = if vb[node] > own { theta * (1.0 + n) } else { theta };
                        coupling += c;
                        pull += c * vb[node];
                    }
                }
                shift[node] = beta + coupling;
                rhs[node] = problem.cost(nodes.x(node), a, beta * own) + pull;
            }
            let mut next = v[a].clone();
            solve_shifted_system(grid, &ops, &policy, &shift, 1.0, &rhs, &mut next)?;
            for (old, new) in v[a].iter().zip(&next) {
                change = change.max((old - new).abs());
                size = size.max(new.abs());
            }
            v[a] = next;
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("penalized system"));
        }
        residual = change;
        if change <= tol * (1.0 + size) {
            return Ok(v
                .into_iter()
                .map(|values| {
                    let info = SolveInfo { iterations: sweep, residual, residual_history: Vec::new() };
                    ValueField::new(grid.clone(), values, FieldKind::Penalized { beta, n }, info)
                })
                .collect());
        }
    }
    Err(Error::NoConvergence { iterations: max_sweeps, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::solve_discounted;

    fn two_control() -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![-1.0], vec![1.0]])
            .drift(|x, a, out| out[0] = -x[0] + a[0])
            .diffusion(|_, _, out| out[0] = 1.0)
            .running_cost(|x, a, _| -x[0] * x[0] + 2.0 * a[0] * x[0])
            .gamma(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn singleton_ignores_penalty() {
        let p = ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = -x[0])
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .running_cost(|x, _, _| x[0] * x[0])
            .gamma(1.0)
            .build()
            .unwrap();
        let grid = Grid::uniform_1d(-6.0, 6.0, 0.05).unwrap();
        let a = solve_penalized_system(&p, &grid, 0.5, 0.0, 1e-12, 10).unwrap();
        let b = solve_penalized_system(&p, &grid, 0.5, 50.0, 1e-12, 10).unwrap();
        assert_eq!(a[0].values(), b[0].values());
        assert!((a[0].at(&[0.0]) - 1.6).abs() < 1e-3);
    }

    #[test]
    fn increases_with_penalty_toward_hjb() {
        let grid = Grid::uniform_1d(-6.0, 6.0, 0.05).unwrap();
        let p = two_control();
        let hjb = solve_discounted(&p, &grid, 0.5, 1e-9, 100).unwrap().at(&[0.0]);
        let mut last = f64::NEG_INFINITY;
        for n in [0.0, 2.0, 10.0, 50.0, 1000.0] {
            let fields = solve_penalized_system(&p, &grid, 0.5, n, 1e-11, 1_000_000).unwrap();
            let v = fields[1].at(&[0.0]);
            assert!(v >= last - 1e-9 && v <= hjb + 1e-6, "n={n}: {v} vs {last}, hjb {hjb}");
            last = v;
        }
        assert!((hjb - last).abs() / hjb < 0.02);
    }
}

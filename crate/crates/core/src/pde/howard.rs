//! Policy-iteration building blocks shared by the discounted, parabolic and
//! ergodic solvers.

use rayon::prelude::*;

use super::grid::Grid;
use super::operator::Operator;
use crate::model::ControlProblem;

/// Relative width of the band in which two control objectives count as tied;
/// the lowest index wins inside it.
pub(crate) const TIE_BAND: f64 = 1e-10;

/// Node coordinates, flattened.
pub(crate) struct Nodes {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl Nodes {
    pub(crate) fn new(grid: &Grid) -> Self {
        let d = grid.dim();
        let mut coords = vec![0.0; grid.len() * d];
        for (n, chunk) in coords.chunks_mut(d).enumerate() {
            grid.coords_into(n, chunk);
        }
        Self { dim: d, coords }
    }

    #[inline]
    pub(crate) fn x(&self, node: usize) -> &[f64] {
        &self.coords[node * self.dim..(node + 1) * self.dim]
    }
}

/// Lowest index among the maximizers, up to the tie band.
pub(crate) fn argmax_lowest(values: impl Iterator<Item = f64> + Clone) -> (usize, f64) {
    let best = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let band = TIE_BAND * (1.0 + best.abs());
    let idx = values.clone().position(|v| v >= best - band).unwrap_or(0);
    (idx, best)
}

/// Per node, `max_a [ (L^a v)(node) + f(x, a, y(node)) ]` and its argmax.
pub(crate) fn hamiltonian(
    problem: &ControlProblem,
    nodes: &Nodes,
    ops: &[Operator],
    v: &[f64],
    y: &(dyn Fn(usize) -> f64 + Sync),
) -> Vec<(usize, f64)> {
    let m = ops.len();
    (0..v.len())
        .into_par_iter()
        .map(|n| {
            let x = nodes.x(n);
            let yn = y(n);
            argmax_lowest((0..m).map(|a| ops[a].apply(n, v) + problem.cost(x, a, yn)))
        })
        .collect()
}

/// Policy-evaluation right-hand side `base(n) + scale · f(x, π(n), y(n))`,
/// with Dirichlet rows set to `fixed(n)`.
pub(crate) fn policy_rhs(
    problem: &ControlProblem,
    nodes: &Nodes,
    ops: &[Operator],
    policy: &[usize],
    scale: f64,
    base: &(dyn Fn(usize) -> f64 + Sync),
    y: &(dyn Fn(usize) -> f64 + Sync),
    fixed: &(dyn Fn(usize) -> f64 + Sync),
) -> Vec<f64> {
    (0..policy.len())
        .into_par_iter()
        .map(|n| {
            if ops[policy[n]].rows[n].is_fixed() {
                fixed(n)
            } else {
                base(n) + scale * problem.cost(nodes.x(n), policy[n], y(n))
            }
        })
        .collect()
}

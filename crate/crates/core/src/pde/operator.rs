//! Monotone discretization of `L^a v = b(x,a)·Dv + ½ tr(σσᵀ(x,a) D²v)`.
//!
//! Along each axis the drift uses a centered difference wherever that keeps
//! the off-diagonal weights nonnegative (`|b_i| h <= a_ii − |a_12|`), and the
//! upwind difference otherwise. Cross derivatives use the seven-point split
//! along the diagonal matching the sign of `a_12`; it needs `a_ii >= |a_12|`.

use rayon::prelude::*;

use super::grid::{BoundaryPolicy, Grid};
use crate::error::{Error, Result};
use crate::model::ControlProblem;

const MAX_NEIGHBORS: usize = 6;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Row {
    /// Dirichlet node; the generator is not applied.
    Fixed,
    Gen {
        diag: f64,
        cols: [usize; MAX_NEIGHBORS],
        vals: [f64; MAX_NEIGHBORS],
        len: u8,
    },
}

impl Row {
    fn push(cols: &mut [usize; MAX_NEIGHBORS], vals: &mut [f64; MAX_NEIGHBORS], len: &mut u8, col: usize, val: f64) {
        if val == 0.0 {
            return;
        }
        if let Some(k) = cols[..*len as usize].iter().position(|&c| c == col) {
            vals[k] += val;
        } else {
            cols[*len as usize] = col;
            vals[*len as usize] = val;
            *len += 1;
        }
    }

    #[inline]
    pub(crate) fn apply(&self, node: usize, v: &[f64]) -> f64 {
        match self {
            Row::Fixed => 0.0,
            Row::Gen { diag, cols, vals, len } => {
                let mut acc = diag * v[node];
                for k in 0..*len as usize {
                    acc += vals[k] * v[cols[k]];
                }
                acc
            }
        }
    }

    pub(crate) fn is_fixed(&self) -> bool {
        matches!(self, Row::Fixed)
    }

    pub(crate) fn diag(&self) -> f64 {
        match self {
            Row::Fixed => 0.0,
            Row::Gen { diag, .. } => *diag,
        }
    }

    pub(crate) fn neighbors(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (cols, vals, len) = match self {
            Row::Fixed => (&[][..], &[][..], 0),
            Row::Gen { cols, vals, len, .. } => (&cols[..], &vals[..], *len as usize),
        };
        cols[..len].iter().copied().zip(vals[..len].iter().copied())
    }
}

/// Assembled `L^a_h` for one control.
#[derive(Debug, Clone)]
pub(crate) struct Operator {
    pub rows: Vec<Row>,
}

impl Operator {
    pub(crate) fn apply(&self, node: usize, v: &[f64]) -> f64 {
        self.rows[node].apply(node, v)
    }

    pub(crate) fn max_abs_diag(&self) -> f64 {
        self.rows.iter().map(|r| r.diag().abs()).fold(0.0, f64::max)
    }
}

pub(crate) fn stencil(problem: &ControlProblem, grid: &Grid, control: usize, node: usize) -> Result<Row> {
    let d = grid.dim();
    if grid.boundary() == BoundaryPolicy::DirichletFromGrowth && grid.is_boundary(node) {
        return Ok(Row::Fixed);
    }
    let h = grid.h();
    let h2 = h * h;
    let mut x = [0.0; 2];
    grid.coords_into(node, &mut x[..d]);
    let mut b = [0.0; 2];
    let mut s = [0.0; 4];
    problem.drift_at(&x[..d], control, &mut b[..d]);
    problem.diffusion_at(&x[..d], control, &mut s[..d * d]);
    // a = σσᵀ
    let mut a = [0.0; 4];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = (0..d).map(|k| s[i * d + k] * s[j * d + k]).sum();
        }
    }

    let mut cols = [0usize; MAX_NEIGHBORS];
    let mut vals = [0.0; MAX_NEIGHBORS];
    let mut len = 0u8;
    let mut diag = 0.0;

    let boundary = grid.is_boundary(node);
    let cross = if d == 2 && !boundary { a[1] } else { 0.0 };
    let c = cross.abs();
    if c > 0.0 {
        for i in 0..2 {
            if a[i * d + i] < c {
                return Err(Error::MonotonicityLost {
                    node,
                    control,
                    coefficient: a[i * d + i] - c,
                });
            }
        }
        let dir1: isize = if cross > 0.0 { 1 } else { -1 };
        let w = c / (2.0 * h2);
        for sgn in [1isize, -1] {
            let p = grid
                .neighbor(node, 0, sgn)
                .and_then(|n| grid.neighbor(n, 1, sgn * dir1))
                .ok_or(Error::StencilLeavesGrid { node, dim: 1 })?;
            Row::push(&mut cols, &mut vals, &mut len, p, w);
        }
        diag += c / h2;
    }

    for i in 0..d {
        let aii = a[i * d + i];
        let lo = grid.neighbor(node, i, -1);
        let hi = grid.neighbor(node, i, 1);
        match (lo, hi) {
            (Some(lo), Some(hi)) => {
                let side = 0.5 * aii / h2 - 0.5 * c / h2;
                diag -= aii / h2;
                if b[i].abs() * h <= aii - c {
                    Row::push(&mut cols, &mut vals, &mut len, hi, side + b[i] / (2.0 * h));
                    Row::push(&mut cols, &mut vals, &mut len, lo, side - b[i] / (2.0 * h));
                } else {
                    let (up, down) = (b[i].max(0.0) / h, (-b[i]).max(0.0) / h);
                    Row::push(&mut cols, &mut vals, &mut len, hi, side + up);
                    Row::push(&mut cols, &mut vals, &mut len, lo, side + down);
                    diag -= up + down;
                }
            }
            (None, Some(hi)) => {
                if b[i] < 0.0 {
                    return Err(Error::StencilLeavesGrid { node, dim: i });
                }
                Row::push(&mut cols, &mut vals, &mut len, hi, b[i] / h);
                diag -= b[i] / h;
            }
            (Some(lo), None) => {
                if b[i] > 0.0 {
                    return Err(Error::StencilLeavesGrid { node, dim: i });
                }
                Row::push(&mut cols, &mut vals, &mut len, lo, -b[i] / h);
                diag += b[i] / h;
            }
            (None, None) => unreachable!("grids have at least two cells per axis"),
        }
    }

    let scale = diag.abs().max(1.0);
    for k in 0..len as usize {
        if vals[k] < -MONOTONE_SLACK * scale {
            return Err(Error::MonotonicityLost { node, control, coefficient: vals[k] });
        }
    }
    Ok(Row::Gen { diag, cols, vals, len })
}

pub(crate) fn assemble(problem: &ControlProblem, grid: &Grid, control: usize) -> Result<Operator> {
    let rows = (0..grid.len())
        .into_par_iter()
        .map(|node| stencil(problem, grid, control, node))
        .collect::<Result<Vec<_>>>()?;
    Ok(Operator { rows })
}

pub(crate) fn assemble_all(problem: &ControlProblem, grid: &Grid) -> Result<Vec<Operator>> {
    if problem.dim() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "problem dimension {} does not match grid dimension {}",
            problem.dim(),
            grid.dim()
        )));
    }
    (0..problem.n_controls()).map(|a| assemble(problem, grid, a)).collect()
}

/// `(L^a_h v)(node)` for a single node and control.
pub fn discrete_generator_apply(
    problem: &ControlProblem,
    grid: &Grid,
    field: &[f64],
    control: usize,
    node: usize,
) -> Result<f64> {
    if field.len() != grid.len() || node >= grid.len() || control >= problem.n_controls() {
        return Err(Error::InvalidArgument("field, node or control does not match the grid".into()));
    }
    match stencil(problem, grid, control, node)? {
        Row::Fixed => Err(Error::InvalidArgument(format!("node {node} is a Dirichlet boundary node"))),
        row => Ok(row.apply(node, field)),
    }
}

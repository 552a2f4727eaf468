//! Linear solves for `(shift·I − scale·L^π) v = rhs` with a frozen policy `π`
//! and a scalar or nodewise shift.
//! Dirichlet rows read `v = rhs`.
//!
//! One-dimensional grids are tridiagonal and solved directly (Thomas); in two
//! dimensions a Gauss–Seidel sweep runs until the update stalls. Both rely on
//! the M-matrix structure of the monotone scheme.

use super::grid::Grid;
use super::operator::Operator;
use crate::error::{Error, Result};

const GS_MAX_SWEEPS: usize = 200_000;
const GS_TOL: f64 = 1e-13;

pub(crate) fn solve_policy_system(
    grid: &Grid,
    ops: &[Operator],
    policy: &[usize],
    shift: f64,
    scale: f64,
    rhs: &[f64],
    v: &mut [f64],
) -> Result<()> {
    let shift = vec![shift; v.len()];
    solve_shifted_system(grid, ops, policy, &shift, scale, rhs, v)
}

pub(crate) fn solve_shifted_system(
    grid: &Grid,
    ops: &[Operator],
    policy: &[usize],
    shift: &[f64],
    scale: f64,
    rhs: &[f64],
    v: &mut [f64],
) -> Result<()> {
    if grid.dim() == 1 {
        thomas(ops, policy, shift, scale, rhs, v)
    } else {
        gauss_seidel(ops, policy, shift, scale, rhs, v)
    }
}

fn thomas(ops: &[Operator], policy: &[usize], shift: &[f64], scale: f64, rhs: &[f64], v: &mut [f64]) -> Result<()> {
    let n = v.len();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 0..n {
        let row = &ops[policy[i]].rows[i];
        if row.is_fixed() {
            diag[i] = 1.0;
            continue;
        }
        diag[i] = shift[i] - scale * row.diag();
        for (j, w) in row.neighbors() {
            if j + 1 == i {
                lower[i] = -scale * w;
            } else if j == i + 1 {
                upper[i] = -scale * w;
            } else {
                return Err(Error::InvalidArgument("non-tridiagonal row in a 1-d system".into()));
            }
        }
    }
    // forward elimination
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        if m == 0.0 || !m.is_finite() {
            return Err(Error::NonFinite("tridiagonal elimination"));
        }
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    v[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        v[i] = d[i] - c[i] * v[i + 1];
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tridiagonal solve"));
    }
    Ok(())
}

fn gauss_seidel(ops: &[Operator], policy: &[usize], shift: &[f64], scale: f64, rhs: &[f64], v: &mut [f64]) -> Result<()> {
    let n = v.len();
    let mut change = f64::INFINITY;
    for _ in 0..GS_MAX_SWEEPS {
        change = 0.0;
        let mut size = 0.0_f64;
        for i in 0..n {
            let row = &ops[policy[i]].rows[i];
            let next = if row.is_fixed() {
                rhs[i]
            } else {
                let off: f64 = row.neighbors().map(|(j, w)| w * v[j]).sum();
                (rhs[i] + scale * off) / (shift[i] - scale * row.diag())
            };
            change = change.max((next - v[i]).abs());
            size = size.max(next.abs());
            v[i] = next;
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("Gauss-Seidel sweep"));
        }
        if change <= GS_TOL * (1.0 + size) {
            return Ok(());
        }
    }
    Err(Error::NoConvergence { iterations: GS_MAX_SWEEPS, residual: change })
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Inward one-sided drift differences, second differences dropped
    /// (linear extrapolation of the ghost value).
    OneSidedExtrapolation,
    /// Boundary nodes pinned to `h` (parabolic) or `0` (discounted).
    DirichletFromGrowth,
}

/// Uniform tensor grid on a box, `d ∈ {1, 2}`. Node `i0 + n0 * i1`; the first
/// coordinate varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    h: f64,
    counts: Vec<usize>,
    boundary: BoundaryPolicy,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, h: f64, boundary: BoundaryPolicy) -> Result<Self> {
        let d = lower.len();
        if d == 0 || d > 2 || upper.len() != d {
            return Err(Error::InvalidArgument(format!(
                "grids support dimension 1 or 2 with matching bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
        }
        let mut counts = Vec::with_capacity(d);
        for i in 0..d {
            if !(lower[i] < upper[i]) {
                return Err(Error::InvalidArgument(format!(
                    "bounds not ordered in dimension {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            let cells = (upper[i] - lower[i]) / h;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-8 * rounded.max(1.0) || rounded < 2.0 {
                return Err(Error::InvalidArgument(format!(
                    "spacing {h} does not divide [{}, {}] into at least two cells",
                    lower[i], upper[i]
                )));
            }
            counts.push(rounded as usize + 1);
        }
        Ok(Self { lower, upper, h, counts, boundary })
    }

    pub fn uniform_1d(lower: f64, upper: f64, h: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper], h, BoundaryPolicy::OneSidedExtrapolation)
    }

    pub fn with_boundary(mut self, boundary: BoundaryPolicy) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn boundary(&self) -> BoundaryPolicy {
        self.boundary
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn axis_index(&self, node: usize, dim: usize) -> usize {
        if dim == 0 {
            node % self.counts[0]
        } else {
            node / self.counts[0]
        }
    }

    pub fn coord(&self, node: usize, dim: usize) -> f64 {
        self.lower[dim] + self.axis_index(node, dim) as f64 * self.h
    }

    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.coord(node, i);
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord(node, i)).collect()
    }

    pub(crate) fn stride(&self, dim: usize) -> usize {
        if dim == 0 {
            1
        } else {
            self.counts[0]
        }
    }

    /// Neighbor one step along `dim` in direction `dir` (`±1`), if on the grid.
    pub fn neighbor(&self, node: usize, dim: usize, dir: isize) -> Option<usize> {
        let i = self.axis_index(node, dim) as isize + dir;
        if i < 0 || i >= self.counts[dim] as isize {
            None
        } else if dir >= 0 {
            Some(node + dir as usize * self.stride(dim))
        } else {
            Some(node - (-dir) as usize * self.stride(dim))
        }
    }

    pub fn on_lower(&self, node: usize, dim: usize) -> bool {
        self.axis_index(node, dim) == 0
    }

    pub fn on_upper(&self, node: usize, dim: usize) -> bool {
        self.axis_index(node, dim) + 1 == self.counts[dim]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        (0..self.dim()).any(|i| self.on_lower(node, i) || self.on_upper(node, i))
    }

    /// Grid node closest to `x`, clamped to the box.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut node = 0;
        for i in 0..self.dim() {
            let k = ((x[i] - self.lower[i]) / self.h).round();
            let k = k.clamp(0.0, (self.counts[i] - 1) as f64) as usize;
            node += k * self.stride(i);
        }
        node
    }

    /// Normalization node of the ergodic bias: the node nearest the origin.
    pub fn anchor(&self) -> usize {
        self.nearest_node(&vec![0.0; self.dim()])
    }
}

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::grid::Grid;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    Parabolic { t: f64 },
    Discounted { beta: f64 },
    Penalized { beta: f64, n: f64 },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveInfo {
    pub iterations: usize,
    pub residual: f64,
    /// Residual after each policy-evaluation sweep (discounted solves).
    pub residual_history: Vec<f64>,
}

/// Grid function produced by one of the solvers.
#[derive(Debug, Clone)]
pub struct ValueField {
    grid: Grid,
    values: Vec<f64>,
    kind: FieldKind,
    info: SolveInfo,
}

impl ValueField {
    pub fn new(grid: Grid, values: Vec<f64>, kind: FieldKind, info: SolveInfo) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values, kind, info }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn info(&self) -> &SolveInfo {
        &self.info
    }

    pub fn at_node(&self, node: usize) -> f64 {
        self.values[node]
    }

    /// Value at the node nearest `x`.
    pub fn at(&self, x: &[f64]) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// `max |β v(x)| / (1 + |x|)` for discounted fields, `max |v(x)| / (1 + |x|)` otherwise.
    pub fn growth_constant(&self) -> f64 {
        let factor = match self.kind {
            FieldKind::Discounted { beta } | FieldKind::Penalized { beta, .. } => beta,
            FieldKind::Parabolic { .. } => 1.0,
        };
        growth_constant(&self.grid, &self.values, factor)
    }

    /// Largest difference quotient between axis-adjacent nodes.
    pub fn discrete_lipschitz(&self) -> f64 {
        discrete_lipschitz(&self.grid, &self.values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_grid_csv(&self.grid, &self.values, "value", path)
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Meta<'a> {
            #[serde(flatten)]
            kind: FieldKind,
            h: f64,
            lower: &'a [f64],
            upper: &'a [f64],
            boundary: super::grid::BoundaryPolicy,
            iterations: usize,
            residual: f64,
            growth_constant: f64,
        }
        let meta = Meta {
            kind: self.kind,
            h: self.grid.h(),
            lower: self.grid.lower(),
            upper: self.grid.upper(),
            boundary: self.grid.boundary(),
            iterations: self.info.iterations,
            residual: self.info.residual,
            growth_constant: self.growth_constant(),
        };
        write_json(path, &meta)
    }
}

pub(crate) fn growth_constant(grid: &Grid, values: &[f64], factor: f64) -> f64 {
    (0..grid.len())
        .map(|n| {
            let r: f64 = grid.coords(n).iter().map(|c| c * c).sum::<f64>().sqrt();
            (factor * values[n]).abs() / (1.0 + r)
        })
        .fold(0.0, f64::max)
}

pub(crate) fn discrete_lipschitz(grid: &Grid, values: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for n in 0..grid.len() {
        for dim in 0..grid.dim() {
            if let Some(m) = grid.neighbor(n, dim, 1) {
                worst = worst.max((values[m] - values[n]).abs() / grid.h());
            }
        }
    }
    worst
}

pub(crate) fn write_grid_csv(grid: &Grid, values: &[f64], column: &str, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..grid.dim()).map(|i| format!("x{i}")).collect();
    header.push(column.to_string());
    w.write_record(&header)?;
    for (n, v) in values.iter().enumerate() {
        let mut row: Vec<String> = grid.coords(n).iter().map(|c| c.to_string()).collect();
        row.push(v.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Config(e.to_string()))?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Control index per grid node.
#[derive(Debug, Clone)]
pub struct Policy {
    grid: Grid,
    controls: Vec<usize>,
}

impl Policy {
    pub fn new(grid: Grid, controls: Vec<usize>) -> Self {
        Self { grid, controls }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn controls(&self) -> &[usize] {
        &self.controls
    }

    /// Nearest-node feedback `α(x)`.
    pub fn feedback(&self, x: &[f64]) -> usize {
        self.controls[self.grid.nearest_node(x)]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let values: Vec<f64> = self.controls.iter().map(|&c| c as f64).collect();
        write_grid_csv(&self.grid, &values, "control", path)
    }
}

/// The ergodic constant and the bias function normalized to vanish at the
/// anchor node.
#[derive(Debug, Clone, Serialize)]
pub struct ErgodicPair {
    pub lambda: f64,
    #[serde(skip)]
    pub grid: Grid,
    #[serde(skip)]
    pub phi: Vec<f64>,
    pub anchor: usize,
    /// Max-norm ergodic residual on interior nodes.
    pub residual: f64,
    pub betas: Vec<f64>,
    /// `β v^β(anchor)` along the schedule.
    pub lambda_betas: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ErgodicPair {
    pub fn phi_at(&self, x: &[f64]) -> f64 {
        self.phi[self.grid.nearest_node(x)]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_grid_csv(&self.grid, &self.phi, "phi", path)
    }

    pub fn write_metadata(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

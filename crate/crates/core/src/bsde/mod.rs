//! Regression Monte Carlo for penalized BSDEs driven by the regime-switching
//! forward system.
//!
//! Backward induction on the Euler grid. At step `k` the conditional
//! expectation `C(x, r) ≈ E[Y_{k+1} | X_k = x, I_k = r]` is fitted by least
//! squares; the jump component is read off the fitted surface,
//! `U(a') = C(X_k, a') − C(X_k, I_k)`, and the pathwise value is
//!
//! ```text
//! Y_k = Y_{k+1} + dt · [g(X_k, I_k, C) + n Σ_{a'} ϑ({a'}) U(a')_+]
//! ```
//!
//! with `g = −β C + f(x, I, β C)` (discounted, zero terminal value at the
//! truncation horizon) or `g = f(x, I, C / (T − t + 1))` (finite horizon,
//! terminal value `h(X_T)`).
//!
//! Paths start from `x + dispersion · N(0, I)` with the regimes assigned
//! round-robin, so the time-0 surface can be fitted and read at `(x, a)` for
//! every `a` from a single solve.

mod basis;
mod dual;
mod forward;

pub use basis::{BasisFamily, RegressionBasis, MAX_CONDITION, PATHS_PER_FUNCTION};
pub use dual::{dual_bound_estimate, DualEstimate, PayoffSpec};

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::stats::{mean_se, Estimate};
use basis::{fit_groups, FeatureMap};
use forward::ForwardPaths;

#[derive(Debug, Clone)]
pub struct BsdeConfig {
    /// Truncation horizon (discounted) or maturity (finite horizon).
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub basis: RegressionBasis,
    /// Standard deviation of the start cloud around `x`; must be positive.
    pub dispersion: f64,
    /// Target for `e^{−β T_trunc}`; the discounted solver rejects shorter horizons.
    pub truncation_tail: f64,
}

impl BsdeConfig {
    pub fn new(horizon: f64, dt: f64, n_paths: usize) -> Self {
        Self { horizon, dt, n_paths, basis: RegressionBasis::default(), dispersion: 1.0, truncation_tail: 1e-3 }
    }

    /// Config whose horizon is the shortest one allowed for `beta`.
    pub fn for_discount(beta: f64, dt: f64, n_paths: usize) -> Self {
        let mut cfg = Self::new(0.0, dt, n_paths);
        cfg.horizon = truncation_horizon(beta, cfg.truncation_tail);
        cfg.horizon = (cfg.horizon / dt).ceil() * dt;
        cfg
    }
}

/// `ln(1 / tail) / β`.
pub fn truncation_horizon(beta: f64, tail: f64) -> f64 {
    (1.0 / tail).ln() / beta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BsdeKind {
    Discounted { beta: f64 },
    FiniteHorizon { maturity: f64 },
}

/// Output of a backward solve.
#[derive(Debug, Clone)]
pub struct BsdeSolution {
    pub kind: BsdeKind,
    pub n: f64,
    pub x: Vec<f64>,
    pub a: usize,
    pub basis: RegressionBasis,
    pub n_paths: usize,
    pub times: Vec<f64>,
    /// `Y_0` at `(x, a)`.
    pub y0: Estimate,
    /// `Y_0` at `(x, r)` for every regime `r`.
    pub y0_by_regime: Vec<Estimate>,
    /// Per step (length `steps`), coefficients of `C`, laid out group-major.
    pub y_coefficients: Vec<Vec<f64>>,
    /// Per step, coefficients of `Z`, laid out `(group, component, function)`.
    pub z_coefficients: Vec<Vec<f64>>,
    /// Per step and control, path average of `U(a')`.
    pub u_mean: Vec<Vec<f64>>,
    /// Path average of `∫_0^t n Σ ϑ U_+ ds` at every time (length `steps + 1`).
    pub penalty_accumulator: Vec<f64>,
    /// Per step, path average of `Σ ϑ U_+²`.
    pub gap_density: Vec<f64>,
    /// Time integral of `gap_density`, with the SE across paths.
    pub constraint_gap: Estimate,
    /// Per step, path average of `Y_k`.
    pub y_mean: Vec<f64>,
    pub condition_numbers: Vec<f64>,
    /// Smallest regression group seen at any step.
    pub min_group_size: usize,
}

impl BsdeSolution {
    /// `C(x, a)` at step `k`.
    pub fn y_surface(&self, k: usize, x: &[f64], a: usize) -> f64 {
        let fm = FeatureMap::new(&self.basis, x.len());
        let p = fm.len();
        let g = self.basis.group(a);
        let mut scratch = vec![0.0; p];
        fm.dot(x, &self.y_coefficients[k][g * p..(g + 1) * p], &mut scratch)
    }

    /// `Z(x, a)` at step `k`.
    pub fn z_surface(&self, k: usize, x: &[f64], a: usize) -> Vec<f64> {
        let d = x.len();
        let fm = FeatureMap::new(&self.basis, d);
        let p = fm.len();
        let g = self.basis.group(a);
        let mut scratch = vec![0.0; p];
        (0..d)
            .map(|j| {
                let off = (g * d + j) * p;
                fm.dot(x, &self.z_coefficients[k][off..off + p], &mut scratch)
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let m = self.y0_by_regime.len();
        let mut header = vec!["t".to_string(), "y_mean".into(), "penalty_accumulator".into(), "gap_density".into(), "condition".into()];
        header.extend((0..m).map(|a| format!("u_mean_{a}")));
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![self.times[k].to_string()];
            if k < self.y_mean.len() {
                row.push(self.y_mean[k].to_string());
                row.push(self.penalty_accumulator[k].to_string());
                row.push(self.gap_density[k].to_string());
                row.push(self.condition_numbers[k].to_string());
                row.extend(self.u_mean[k].iter().map(|u| u.to_string()));
            } else {
                row.push(String::new());
                row.push(self.penalty_accumulator[k].to_string());
                row.extend(std::iter::repeat_n(String::new(), 2 + m));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Time-integrated mean of `Σ_{a'} ϑ({a'}) U(a')_+²`.
pub fn jump_constraint_gap(solution: &BsdeSolution) -> f64 {
    solution.constraint_gap.mean
}

fn check_common(problem: &ControlProblem, x: &[f64], a: usize, n: f64, cfg: &BsdeConfig) -> Result<usize> {
    if x.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!("x must have dimension {}", problem.dim())));
    }
    if a >= problem.n_controls() {
        return Err(Error::InvalidArgument(format!("control {a} not in the control list")));
    }
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {n}")));
    }
    if !(cfg.dispersion > 0.0 && cfg.dispersion.is_finite()) {
        return Err(Error::InvalidArgument("start dispersion must be positive".into()));
    }
    cfg.basis.check()?;
    let size = cfg.basis.size(problem.dim(), problem.n_controls());
    let need = PATHS_PER_FUNCTION * size;
    if cfg.n_paths < need {
        return Err(Error::InsufficientSamples { have: cfg.n_paths, need, what: "paths for the regression basis" });
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", cfg.dt)));
    }
    let steps = (cfg.horizon / cfg.dt).round();
    if steps < 1.0 || (steps * cfg.dt - cfg.horizon).abs() > 1e-9 * cfg.horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {} must be a positive multiple of dt {}",
            cfg.horizon, cfg.dt
        )));
    }
    Ok(steps as usize)
}

fn check_truncation(beta: f64, cfg: &BsdeConfig) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("discount rate must be positive, got {beta}")));
    }
    let need = truncation_horizon(beta, cfg.truncation_tail);
    if cfg.horizon < need * (1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!(
            "truncation horizon {} below ln(1/{})/beta = {need}",
            cfg.horizon, cfg.truncation_tail
        )));
    }
    Ok(())
}

/// Penalized discounted BSDE truncated at `cfg.horizon` with zero terminal value.
pub fn solve_penalized_bsde(
    problem: &ControlProblem,
    x: &[f64],
    a: usize,
    beta: f64,
    n: f64,
    cfg: &BsdeConfig,
    seed: u64,
) -> Result<BsdeSolution> {
    let steps = check_common(problem, x, a, n, cfg)?;
    check_truncation(beta, cfg)?;
    let paths = forward::simulate(problem, x, cfg.dispersion, cfg.dt, steps, cfg.n_paths, seed)?;
    backward(problem, &paths, x, a, n, cfg, BsdeKind::Discounted { beta })
}

/// Penalized BSDE on `[0, T]` with terminal value `h(X_T)` and driver
/// `f(X, I, Y / (T − t + 1))`.
pub fn solve_finite_horizon_bsde(
    problem: &ControlProblem,
    x: &[f64],
    a: usize,
    n: f64,
    cfg: &BsdeConfig,
    seed: u64,
) -> Result<BsdeSolution> {
    let steps = check_common(problem, x, a, n, cfg)?;
    let paths = forward::simulate(problem, x, cfg.dispersion, cfg.dt, steps, cfg.n_paths, seed)?;
    backward(problem, &paths, x, a, n, cfg, BsdeKind::FiniteHorizon { maturity: cfg.horizon })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepPoint {
    pub n: f64,
    pub y0: Estimate,
    pub gap: Estimate,
}

/// Discounted solves over increasing `n` on one shared set of paths.
pub fn penalization_sweep(
    problem: &ControlProblem,
    x: &[f64],
    a: usize,
    beta: f64,
    n_list: &[f64],
    cfg: &BsdeConfig,
    seed: u64,
) -> Result<Vec<BsdeSolution>> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("penalty list must be strictly increasing, got {n_list:?}")));
    }
    let steps = check_common(problem, x, a, n_list[0], cfg)?;
    check_truncation(beta, cfg)?;
    let paths = forward::simulate(problem, x, cfg.dispersion, cfg.dt, steps, cfg.n_paths, seed)?;
    n_list.iter().map(|&n| backward(problem, &paths, x, a, n, cfg, BsdeKind::Discounted { beta })).collect()
}

impl BsdeSolution {
    pub fn sweep_point(&self) -> SweepPoint {
        SweepPoint { n: self.n, y0: self.y0, gap: self.constraint_gap }
    }
}

struct StepStats {
    penalty: f64,
    gap: f64,
    y: f64,
    u: Vec<f64>,
}

fn backward(
    problem: &ControlProblem,
    paths: &ForwardPaths,
    x0: &[f64],
    a0: usize,
    n: f64,
    cfg: &BsdeConfig,
    kind: BsdeKind,
) -> Result<BsdeSolution> {
    let d = paths.dim;
    let np = paths.n_paths;
    let m = problem.n_controls();
    let dt = paths.dt;
    let steps = paths.steps;
    let theta = problem.control_rate();
    let basis = &cfg.basis;
    let fm = FeatureMap::new(basis, d);
    let p = fm.len();
    let n_groups = basis.n_groups(m);

    let mut y: Vec<f64> = match kind {
        BsdeKind::Discounted { .. } => vec![0.0; np],
        BsdeKind::FiniteHorizon { .. } => {
            paths.states_at(steps).chunks(d).map(|xp| problem.data(xp)).collect()
        }
    };
    let mut gap_path = vec![0.0; np];
    let mut y_coefficients = vec![Vec::new(); steps];
    let mut z_coefficients = vec![Vec::new(); steps];
    let mut u_mean = vec![Vec::new(); steps];
    let mut penalty_step = vec![0.0; steps];
    let mut gap_density = vec![0.0; steps];
    let mut y_mean = vec![0.0; steps];
    let mut condition_numbers = vec![0.0; steps];
    let mut min_group_size = usize::MAX;

    for k in (0..steps).rev() {
        let xs = paths.states_at(k);
        let regimes = paths.regimes_at(k);
        let groups: Vec<usize> = regimes.iter().map(|&r| basis.group(r)).collect();
        let dw = paths.dw_at(k);
        let mut targets: Vec<Vec<f64>> = Vec::with_capacity(1 + d);
        targets.push(y.clone());
        for j in 0..d {
            targets.push((0..np).map(|i| y[i] * dw[i * d + j] / dt).collect());
        }
        let target_refs: Vec<&[f64]> = targets.iter().map(|t| t.as_slice()).collect();
        let fit = fit_groups(&fm, xs, d, &groups, n_groups, &target_refs, k)?;
        condition_numbers[k] = fit.condition;
        min_group_size = min_group_size.min(*fit.counts.iter().min().unwrap_or(&0));
        y_coefficients[k] = fit.coef.iter().flat_map(|g| g[0].iter().copied()).collect();
        z_coefficients[k] = fit.coef.iter().flat_map(|g| g[1..].iter().flatten().copied()).collect();

        let t_k = k as f64 * dt;
        let coef = &fit.coef;
        let stats: Vec<StepStats> = y
            .par_iter_mut()
            .zip(gap_path.par_iter_mut())
            .enumerate()
            .map(|(i, (yi, gi))| {
                let xi = &xs[i * d..(i + 1) * d];
                let own = regimes[i];
                let mut phi = vec![0.0; p];
                fm.eval(xi, &mut phi);
                let surface = |r: usize| -> f64 { phi.iter().zip(&coef[basis.group(r)][0]).map(|(a, b)| a * b).sum() };
                let c_own = surface(own);
                let mut u = vec![0.0; m];
                let mut pos = 0.0;
                let mut pos2 = 0.0;
                for (r, ur) in u.iter_mut().enumerate() {
                    if r != own {
                        *ur = surface(r) - c_own;
                        let plus = ur.max(0.0);
                        pos += theta * plus;
                        pos2 += theta * plus * plus;
                    }
                }
                let driver = match kind {
                    BsdeKind::Discounted { beta } => -beta * c_own + problem.cost(xi, own, beta * c_own),
                    BsdeKind::FiniteHorizon { maturity } => problem.cost(xi, own, c_own / (maturity - t_k + 1.0)),
                };
                *yi += dt * (driver + n * pos);
                *gi += dt * pos2;
                StepStats { penalty: n * pos, gap: pos2, y: *yi, u }
            })
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("backward induction"));
        }
        // ordered sums keep the averages independent of the thread count
        let inv = 1.0 / np as f64;
        penalty_step[k] = stats.iter().map(|s| s.penalty).sum::<f64>() * inv;
        gap_density[k] = stats.iter().map(|s| s.gap).sum::<f64>() * inv;
        y_mean[k] = stats.iter().map(|s| s.y).sum::<f64>() * inv;
        u_mean[k] = (0..m).map(|r| stats.iter().map(|s| s.u[r]).sum::<f64>() * inv).collect();
    }

    let y0_by_regime = time_zero_estimates(problem, paths, &fm, basis, &y, x0)?;
    let mut penalty_accumulator = vec![0.0; steps + 1];
    for k in 0..steps {
        penalty_accumulator[k + 1] = penalty_accumulator[k] + penalty_step[k] * dt;
    }
    Ok(BsdeSolution {
        kind,
        n,
        x: x0.to_vec(),
        a: a0,
        basis: basis.clone(),
        n_paths: np,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        y0: y0_by_regime[a0],
        y0_by_regime,
        y_coefficients,
        z_coefficients,
        u_mean,
        penalty_accumulator,
        gap_density,
        constraint_gap: mean_se(&gap_path),
        y_mean,
        condition_numbers,
        min_group_size,
    })
}

/// Regresses the pathwise `Y_0` on the start cloud and reads the fit at `x0`;
/// the SE is the prediction standard error of the fitted value.
fn time_zero_estimates(
    problem: &ControlProblem,
    paths: &ForwardPaths,
    fm: &FeatureMap,
    basis: &RegressionBasis,
    y: &[f64],
    x0: &[f64],
) -> Result<Vec<Estimate>> {
    let d = paths.dim;
    let m = problem.n_controls();
    let n_groups = basis.n_groups(m);
    let xs = paths.states_at(0);
    let groups: Vec<usize> = paths.regimes_at(0).iter().map(|&r| basis.group(r)).collect();
    let fit = fit_groups(fm, xs, d, &groups, n_groups, &[y], 0)?;
    let p = fm.len();
    let mut phi = vec![0.0; p];
    let mut sse = vec![0.0; n_groups];
    for i in 0..paths.n_paths {
        fm.eval(&xs[i * d..(i + 1) * d], &mut phi);
        let g = groups[i];
        let fitted: f64 = phi.iter().zip(&fit.coef[g][0]).map(|(a, b)| a * b).sum();
        sse[g] += (y[i] - fitted).powi(2);
    }
    fm.eval(x0, &mut phi);
    let phi_v = nalgebra::DVector::from_column_slice(&phi);
    Ok((0..m)
        .map(|r| {
            let g = basis.group(r);
            let mean: f64 = phi.iter().zip(&fit.coef[g][0]).map(|(a, b)| a * b).sum();
            let s2 = sse[g] / (fit.counts[g] - p).max(1) as f64;
            let var = s2 * phi_v.dot(&(&fit.gram_inv[g] * &phi_v));
            Estimate { mean, se: var.max(0.0).sqrt() }
        })
        .collect())
}

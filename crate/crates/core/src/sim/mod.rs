//! Forward simulation of the regime-switching system
//!
//! ```text
//! dX_t = b(X_t, I_t) dt + σ(X_t, I_t) dW_t
//! dI_t = ∫_A (a − I_{t−}) μ(dt, da)
//! ```
//!
//! by Euler–Maruyama with per-step thinning of the Poisson clock (at most one
//! mark per step), optionally under an intensity tilt `ν`.
//!
//! Every path draws from its own ChaCha stream, so results do not depend on
//! how paths are scheduled over worker threads.

mod closed_loop;
mod estimators;

pub use closed_loop::{closed_loop_average, ClosedLoopConfig};
pub use estimators::{
    contraction_log_slope, estimate_contraction, estimate_invariant_measure, estimate_second_moment,
    fit_moment_bound, ContractionPoint, EmpiricalMeasure, InvariantSampling,
};

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::stats::{mean_se, Estimate};

pub const DEFAULT_BLOW_UP_RADIUS: f64 = 1e6;

pub(crate) fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Intensity tilt `ν(t, a) ∈ [1, n + 1]`.
#[derive(Clone)]
pub struct TiltSpec {
    nu: Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    bound: u32,
}

impl fmt::Debug for TiltSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TiltSpec").field("bound", &self.bound).finish_non_exhaustive()
    }
}

impl TiltSpec {
    pub fn new(bound: u32, nu: impl Fn(f64, usize) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if bound == 0 {
            return Err(Error::InvalidArgument("tilt bound n must be positive".into()));
        }
        Ok(Self { nu: Arc::new(nu), bound })
    }

    pub fn constant(value: f64, bound: u32) -> Result<Self> {
        let tilt = Self::new(bound, move |_, _| value)?;
        tilt.eval(0.0, 0)?;
        Ok(tilt)
    }

    pub fn bound(&self) -> u32 {
        self.bound
    }

    /// `ν(t, a)`, rejecting values outside `[1, n + 1]`.
    pub fn eval(&self, t: f64, control: usize) -> Result<f64> {
        let v = (self.nu)(t, control);
        if !(v >= 1.0 && v <= self.bound as f64 + 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tilt value {v} at t = {t}, control {control} outside [1, {}]",
                self.bound + 1
            )));
        }
        Ok(v)
    }
}

/// One Euler–Maruyama step with reusable scratch buffers.
pub(crate) struct EulerStep {
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl EulerStep {
    pub(crate) fn new(dim: usize) -> Self {
        Self { drift: vec![0.0; dim], sigma: vec![0.0; dim * dim] }
    }

    pub(crate) fn advance(&mut self, problem: &ControlProblem, x: &mut [f64], control: usize, dt: f64, dw: &[f64]) {
        let d = x.len();
        problem.drift_at(x, control, &mut self.drift);
        problem.diffusion_at(x, control, &mut self.sigma);
        for i in 0..d {
            let noise: f64 = (0..d).map(|j| self.sigma[i * d + j] * dw[j]).sum();
            x[i] += self.drift[i] * dt + noise;
        }
    }
}

pub(crate) fn draw_increments(rng: &mut ChaCha8Rng, sqrt_dt: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * sqrt_dt;
    }
}

/// Per-step thinning of the regime clock.
pub(crate) struct RegimeClock<'a> {
    problem: &'a ControlProblem,
    tilt: Option<&'a TiltSpec>,
    rates: Vec<f64>,
}

pub(crate) struct ClockOutcome {
    pub mark: Option<usize>,
    /// Factor of `dP/dP^ν` over the step (1 when untilted).
    pub weight_factor: f64,
}

impl<'a> RegimeClock<'a> {
    pub(crate) fn new(problem: &'a ControlProblem, tilt: Option<&'a TiltSpec>) -> Self {
        Self { problem, tilt, rates: vec![0.0; problem.n_controls()] }
    }

    pub(crate) fn step(&mut self, t: f64, dt: f64, rng: &mut ChaCha8Rng) -> Result<ClockOutcome> {
        let base = self.problem.control_rate();
        let base_total = self.problem.intensity_total();
        let total = match self.tilt {
            None => {
                self.rates.iter_mut().for_each(|r| *r = base);
                base_total
            }
            Some(tilt) => {
                let mut sum = 0.0;
                for (a, r) in self.rates.iter_mut().enumerate() {
                    *r = tilt.eval(t, a)? * base;
                    sum += *r;
                }
                sum
            }
        };
        let p_jump = -(-total * dt).exp_m1();
        let u: f64 = rng.random();
        if u < p_jump {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = self.rates.len() - 1;
            for (a, r) in self.rates.iter().enumerate() {
                acc += r;
                if target < acc {
                    chosen = a;
                    break;
                }
            }
            let weight_factor = if self.tilt.is_some() {
                let p_ref = -(-base_total * dt).exp_m1();
                (p_ref * base / base_total) / (p_jump * self.rates[chosen] / total)
            } else {
                1.0
            };
            Ok(ClockOutcome { mark: Some(chosen), weight_factor })
        } else {
            let weight_factor = if self.tilt.is_some() {
                ((total - base_total) * dt).exp()
            } else {
                1.0
            };
            Ok(ClockOutcome { mark: None, weight_factor })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpMark {
    pub time: f64,
    pub control: usize,
}

/// Simulated trajectories `(X, I)`.
///
/// `tilt_weight` is the likelihood ratio of the untilted reference law against
/// the law the paths were drawn from. Unweighted averages are expectations
/// under the tilted measure; weighted averages recover the reference measure.
/// Untilted ensembles carry weights identically equal to 1.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    dim: usize,
    n_paths: usize,
    dt: f64,
    times: Vec<f64>,
    states: Vec<f64>,
    regimes: Vec<u32>,
    weights: Vec<f64>,
    jumps: Vec<Vec<JumpMark>>,
    seed: u64,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let k = (t / self.dt).round();
        if k < 0.0 || k as usize >= self.times.len() || (k * self.dt - t).abs() > 1e-9 * self.dt.max(t.abs()) {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let off = (path * self.times.len() + k) * self.dim;
        &self.states[off..off + self.dim]
    }

    pub fn regime(&self, path: usize, k: usize) -> usize {
        self.regimes[path * self.times.len() + k] as usize
    }

    pub fn weight(&self, path: usize, k: usize) -> f64 {
        self.weights[path * self.times.len() + k]
    }

    pub fn jumps(&self, path: usize) -> &[JumpMark] {
        &self.jumps[path]
    }

    pub fn jump_counts(&self) -> Vec<usize> {
        self.jumps.iter().map(Vec::len).collect()
    }

    /// Mean and SE of the path jump counts (all marks of the Poisson measure).
    pub fn jump_count_estimate(&self) -> Estimate {
        let counts: Vec<f64> = self.jumps.iter().map(|j| j.len() as f64).collect();
        mean_se(&counts)
    }

    pub fn mean_weight(&self, k: usize) -> Estimate {
        let w: Vec<f64> = (0..self.n_paths).map(|p| self.weight(p, k)).collect();
        mean_se(&w)
    }

    /// Columns `path,t,x0..,regime,tilt_weight`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["path".to_string(), "t".to_string()];
        header.extend((0..self.dim).map(|i| format!("x{i}")));
        header.push("regime".into());
        header.push("tilt_weight".into());
        w.write_record(&header)?;
        for p in 0..self.n_paths {
            for (k, t) in self.times.iter().enumerate() {
                let mut row = vec![p.to_string(), t.to_string()];
                row.extend(self.state(p, k).iter().map(|v| v.to_string()));
                row.push(self.regime(p, k).to_string());
                row.push(self.weight(p, k).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `path,t,control`.
    pub fn write_jumps_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["path", "t", "control"])?;
        for (p, marks) in self.jumps.iter().enumerate() {
            for m in marks {
                w.write_record([p.to_string(), m.time.to_string(), m.control.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn step_count(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(horizon >= dt * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!("horizon {horizon} shorter than dt {dt}")));
    }
    Ok((horizon / dt).round() as usize)
}

struct PathRecord {
    states: Vec<f64>,
    regimes: Vec<u32>,
    weights: Vec<f64>,
    jumps: Vec<JumpMark>,
}

/// Simulates `n_paths` trajectories from `(x0, a0)` on `[0, horizon]`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    problem: &ControlProblem,
    x0: &[f64],
    a0: usize,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    tilt: Option<&TiltSpec>,
    seed: u64,
) -> Result<PathEnsemble> {
    let steps = step_count(dt, horizon)?;
    if a0 >= problem.n_controls() {
        return Err(Error::InvalidArgument(format!("initial control {a0} not in the control list")));
    }
    if x0.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!("x0 must have dimension {}", problem.dim())));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let d = problem.dim();
    let sqrt_dt = dt.sqrt();

    let records: Vec<PathRecord> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut step = EulerStep::new(d);
            let mut clock = RegimeClock::new(problem, tilt);
            let mut dw = vec![0.0; d];
            let mut x = x0.to_vec();
            let mut a = a0;
            let mut w = 1.0;
            let mut rec = PathRecord {
                states: Vec::with_capacity((steps + 1) * d),
                regimes: Vec::with_capacity(steps + 1),
                weights: Vec::with_capacity(steps + 1),
                jumps: Vec::new(),
            };
            rec.states.extend_from_slice(&x);
            rec.regimes.push(a as u32);
            rec.weights.push(w);
            for k in 0..steps {
                let t = k as f64 * dt;
                draw_increments(&mut rng, sqrt_dt, &mut dw);
                step.advance(problem, &mut x, a, dt, &dw);
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("path simulation"));
                }
                let outcome = clock.step(t, dt, &mut rng)?;
                w *= outcome.weight_factor;
                if let Some(next) = outcome.mark {
                    rec.jumps.push(JumpMark { time: t + dt, control: next });
                    a = next;
                }
                rec.states.extend_from_slice(&x);
                rec.regimes.push(a as u32);
                rec.weights.push(w);
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_times = steps + 1;
    let mut ens = PathEnsemble {
        dim: d,
        n_paths,
        dt,
        times: (0..n_times).map(|k| k as f64 * dt).collect(),
        states: Vec::with_capacity(n_paths * n_times * d),
        regimes: Vec::with_capacity(n_paths * n_times),
        weights: Vec::with_capacity(n_paths * n_times),
        jumps: Vec::with_capacity(n_paths),
        seed,
    };
    for rec in records {
        ens.states.extend(rec.states);
        ens.regimes.extend(rec.regimes);
        ens.weights.extend(rec.weights);
        ens.jumps.push(rec.jumps);
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_regime(total: f64) -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![-1.0], vec![1.0]])
            .drift(|x, a, out| out[0] = -x[0] + a[0])
            .diffusion(|_, _, out| out[0] = 1.0)
            .gamma(1.0)
            .intensity_total(total)
            .build()
            .unwrap()
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = two_regime(0.5);
        assert!(simulate_paths(&p, &[0.0], 0, 0.0, 1.0, 10, None, 1).is_err());
        assert!(simulate_paths(&p, &[0.0], 0, -0.1, 1.0, 10, None, 1).is_err());
        assert!(simulate_paths(&p, &[0.0], 2, 0.1, 1.0, 10, None, 1).is_err());
        assert!(TiltSpec::constant(0.5, 1).is_err());
        assert!(TiltSpec::constant(3.0, 1).is_err());
        let low = TiltSpec::new(2, |t, _| if t > 0.5 { 0.9 } else { 1.5 }).unwrap();
        assert!(simulate_paths(&p, &[0.0], 0, 0.1, 1.0, 4, Some(&low), 1).is_err());
    }

    #[test]
    fn regimes_piecewise_constant_between_marks() {
        let p = two_regime(2.0);
        let ens = simulate_paths(&p, &[0.3], 1, 0.01, 3.0, 50, None, 9).unwrap();
        for path in 0..ens.n_paths() {
            assert_eq!(ens.regime(path, 0), 1);
            let mut current = 1;
            let mut marks = ens.jumps(path).iter().peekable();
            for k in 1..ens.n_times() {
                let t = ens.times()[k];
                while let Some(m) = marks.peek() {
                    if (m.time - t).abs() < 1e-12 {
                        current = m.control;
                        marks.next();
                    } else {
                        break;
                    }
                }
                assert_eq!(ens.regime(path, k), current);
            }
            assert_eq!(ens.state(path, 0), &[0.3]);
        }
    }

    #[test]
    fn untilted_weights_are_exactly_one() {
        let p = two_regime(1.0);
        let ens = simulate_paths(&p, &[0.0], 0, 0.05, 2.0, 20, None, 4).unwrap();
        for path in 0..20 {
            for k in 0..ens.n_times() {
                assert_eq!(ens.weight(path, k), 1.0);
            }
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let p = two_regime(1.0);
        let a = simulate_paths(&p, &[0.0], 0, 0.05, 2.0, 30, None, 77).unwrap();
        let b = simulate_paths(&p, &[0.0], 0, 0.05, 2.0, 30, None, 77).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.regimes, b.regimes);
        let c = simulate_paths(&p, &[0.0], 0, 0.05, 2.0, 30, None, 78).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn off_grid_time_rejected() {
        let p = two_regime(1.0);
        let ens = simulate_paths(&p, &[0.0], 0, 0.1, 1.0, 2, None, 4).unwrap();
        assert_eq!(ens.time_index(0.5).unwrap(), 5);
        assert!(ens.time_index(0.55).is_err());
        assert!(ens.time_index(1.5).is_err());
    }
}

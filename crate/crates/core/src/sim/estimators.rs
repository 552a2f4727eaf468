use rayon::prelude::*;
use serde::Serialize;

use super::{draw_increments, path_rng, simulate_paths, step_count, EulerStep, PathEnsemble, RegimeClock};
use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::stats::{linear_fit, mean_se, weighted_mean_se, Estimate};

/// Tilt-weighted `E|X_t|²` across the ensemble.
pub fn estimate_second_moment(ensemble: &PathEnsemble, t: f64) -> Result<Estimate> {
    let k = ensemble.time_index(t)?;
    let (sq, w): (Vec<f64>, Vec<f64>) = (0..ensemble.n_paths())
        .map(|p| {
            let x = ensemble.state(p, k);
            (x.iter().map(|v| v * v).sum::<f64>(), ensemble.weight(p, k))
        })
        .unzip();
    Ok(weighted_mean_se(&sq, &w))
}

/// Smallest `C` with `E|X_t^{x,a}|² <= C (1 + |x|²)` over the sampled starts
/// and the simulated time grid.
#[allow(clippy::too_many_arguments)]
pub fn fit_moment_bound(
    problem: &ControlProblem,
    starts: &[Vec<f64>],
    a0: usize,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<f64> {
    let mut c = 0.0_f64;
    for (i, x0) in starts.iter().enumerate() {
        let ens = simulate_paths(problem, x0, a0, dt, horizon, n_paths, None, seed.wrapping_add(i as u64))?;
        let norm = 1.0 + x0.iter().map(|v| v * v).sum::<f64>();
        for k in 0..ens.n_times() {
            let m = estimate_second_moment(&ens, ens.times()[k])?;
            c = c.max(m.mean / norm);
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionPoint {
    pub t: f64,
    /// `E|X_t^{x,a} − X_t^{x',a}|²` under synchronous coupling.
    pub mean: f64,
    pub se: f64,
}

/// Synchronously coupled estimate of `E|X_t^{x,a} − X_t^{x',a}|²`: both copies
/// share the Brownian increments and the regime marks.
#[allow(clippy::too_many_arguments)]
pub fn estimate_contraction(
    problem: &ControlProblem,
    x: &[f64],
    x_prime: &[f64],
    a: usize,
    dt: f64,
    ts: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ContractionPoint>> {
    if x == x_prime {
        return Err(Error::InvalidArgument("contraction needs x != x'".into()));
    }
    if a >= problem.n_controls() {
        return Err(Error::InvalidArgument(format!("control {a} not in the control list")));
    }
    if n_paths == 0 || ts.is_empty() {
        return Err(Error::InvalidArgument("need at least one path and one time".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut targets = Vec::with_capacity(ts.len());
    for &t in ts {
        let k = (t / dt).round();
        if t < 0.0 || (k * dt - t).abs() > 1e-9 * dt.max(t) {
            return Err(Error::OffGrid(t));
        }
        targets.push(k as usize);
    }
    let last = *targets.iter().max().unwrap_or(&0);
    let d = problem.dim();
    let sqrt_dt = dt.sqrt();

    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut step1 = EulerStep::new(d);
            let mut step2 = EulerStep::new(d);
            let mut clock = RegimeClock::new(problem, None);
            let mut dw = vec![0.0; d];
            let mut x1 = x.to_vec();
            let mut x2 = x_prime.to_vec();
            let mut reg = a;
            let mut gaps = vec![0.0; last + 1];
            gaps[0] = sq_dist(&x1, &x2);
            for (k, gap) in gaps.iter_mut().enumerate().skip(1) {
                draw_increments(&mut rng, sqrt_dt, &mut dw);
                step1.advance(problem, &mut x1, reg, dt, &dw);
                step2.advance(problem, &mut x2, reg, dt, &dw);
                if let Some(next) = clock.step((k - 1) as f64 * dt, dt, &mut rng)?.mark {
                    reg = next;
                }
                *gap = sq_dist(&x1, &x2);
                if !gap.is_finite() {
                    return Err(Error::NonFinite("coupled simulation"));
                }
            }
            Ok(targets.iter().map(|&k| gaps[k]).collect())
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(targets
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let col: Vec<f64> = per_path.iter().map(|v| v[i]).collect();
            let e = mean_se(&col);
            ContractionPoint { t: k as f64 * dt, mean: e.mean, se: e.se }
        })
        .collect())
}

/// Slope of `log E|ΔX_t|²` against `t` (least squares).
pub fn contraction_log_slope(points: &[ContractionPoint]) -> f64 {
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let logs: Vec<f64> = points.iter().map(|p| p.mean.ln()).collect();
    linear_fit(&ts, &logs).1
}

fn sq_dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[derive(Debug, Clone)]
pub struct InvariantSampling {
    pub x0: Vec<f64>,
    pub burn_in: f64,
    pub n_samples: usize,
    pub dt: f64,
    /// Steps between recorded samples.
    pub thinning: usize,
    pub n_chains: usize,
    pub blow_up_radius: f64,
}

impl InvariantSampling {
    pub fn new(dim: usize) -> Self {
        Self {
            x0: vec![0.0; dim],
            burn_in: 10.0,
            n_samples: 20_000,
            dt: 0.01,
            thinning: 50,
            n_chains: 64,
            blow_up_radius: super::DEFAULT_BLOW_UP_RADIUS,
        }
    }
}

/// Equally weighted long-run samples of a closed-loop diffusion.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    mean: Vec<f64>,
    /// SE of each mean component from independent-chain batch means.
    mean_se: Vec<f64>,
    second_moment: f64,
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_se(&self) -> &[f64] {
        &self.mean_se
    }

    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn variance(&self, component: usize) -> f64 {
        let m = self.mean[component];
        (0..self.len())
            .map(|i| {
                let v = self.point(i)[component] - m;
                self.weights[i] * v * v
            })
            .sum()
    }

    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * f(self.point(i))).sum()
    }
}

/// Samples the closed-loop dynamics `dX = b(X, α(X)) dt + σ(X, α(X)) dW`
/// after a burn-in, over independent chains.
pub fn estimate_invariant_measure(
    problem: &ControlProblem,
    feedback: &(dyn Fn(&[f64]) -> usize + Sync),
    cfg: &InvariantSampling,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let d = problem.dim();
    if cfg.x0.len() != d {
        return Err(Error::InvalidArgument(format!("x0 must have dimension {d}")));
    }
    if cfg.n_samples == 0 || cfg.n_chains == 0 || cfg.thinning == 0 {
        return Err(Error::InvalidArgument("samples, chains and thinning must be positive".into()));
    }
    let burn_steps = if cfg.burn_in > 0.0 { step_count(cfg.dt, cfg.burn_in)? } else { 0 };
    let per_chain = cfg.n_samples.div_ceil(cfg.n_chains);
    let sqrt_dt = cfg.dt.sqrt();
    let m = problem.n_controls();

    let chains: Vec<Vec<f64>> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = path_rng(seed, c as u64);
            let mut step = EulerStep::new(d);
            let mut dw = vec![0.0; d];
            let mut x = cfg.x0.clone();
            let mut out = Vec::with_capacity(per_chain * d);
            let total = burn_steps + per_chain * cfg.thinning;
            for k in 1..=total {
                let a = feedback(&x);
                if a >= m {
                    return Err(Error::InvalidArgument(format!("feedback returned control {a}")));
                }
                draw_increments(&mut rng, sqrt_dt, &mut dw);
                step.advance(problem, &mut x, a, cfg.dt, &dw);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if !(r2.sqrt() <= cfg.blow_up_radius) {
                    return Err(Error::BlowUp { radius: cfg.blow_up_radius, time: k as f64 * cfg.dt });
                }
                if k > burn_steps && (k - burn_steps) % cfg.thinning == 0 {
                    out.extend_from_slice(&x);
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_chain * cfg.n_chains;
    let w = 1.0 / n as f64;
    let points: Vec<f64> = chains.iter().flatten().copied().collect();
    let mut mean = vec![0.0; d];
    let mut second = 0.0;
    for i in 0..n {
        for j in 0..d {
            let v = points[i * d + j];
            mean[j] += w * v;
            second += w * v * v;
        }
    }
    let mean_se = (0..d)
        .map(|j| {
            let batch: Vec<f64> = chains
                .iter()
                .map(|ch| (0..per_chain).map(|i| ch[i * d + j]).sum::<f64>() / per_chain as f64)
                .collect();
            mean_se(&batch).se
        })
        .collect();
    Ok(EmpiricalMeasure { dim: d, points, weights: vec![w; n], mean, mean_se, second_moment: second })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou(d_shift: f64) -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(move |x, _, out| out[0] = -x[0] + d_shift)
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .gamma(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn second_moment_at_start_is_exact() {
        let ens = simulate_paths(&ou(0.0), &[3.0], 0, 0.01, 1.0, 100, None, 1).unwrap();
        let m = estimate_second_moment(&ens, 0.0).unwrap();
        assert_eq!(m.mean, 9.0);
        assert_eq!(m.se, 0.0);
        assert!(estimate_second_moment(&ens, 0.005).is_err());
    }

    #[test]
    fn coupled_difference_is_deterministic_for_additive_noise() {
        let pts = estimate_contraction(&ou(0.0), &[1.0], &[0.0], 0, 0.01, &[0.0, 1.0], 50, 3).unwrap();
        assert_eq!(pts[0].mean, 1.0);
        assert!(pts[1].se < 1e-15);
        // Euler factor (1 − dt)^{2k}
        assert!((pts[1].mean - 0.99f64.powi(200)).abs() < 1e-12);
        assert!(estimate_contraction(&ou(0.0), &[1.0], &[1.0], 0, 0.01, &[1.0], 5, 3).is_err());
    }

    #[test]
    fn blow_up_guard_trips() {
        let unstable = ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = 5.0 * x[0] + 1.0)
            .diffusion(|_, _, out| out[0] = 1.0)
            .gamma(1.0)
            .build()
            .unwrap();
        let mut cfg = InvariantSampling::new(1);
        cfg.blow_up_radius = 1e3;
        cfg.n_samples = 64;
        let err = estimate_invariant_measure(&unstable, &|_| 0, &cfg, 1).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }
}

//! Lockstep forward simulation for the backward solvers: all paths advance
//! one step at a time, stored time-major.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::sim::{path_rng, EulerStep, RegimeClock};

pub(crate) struct ForwardPaths {
    pub dim: usize,
    pub n_paths: usize,
    pub steps: usize,
    pub dt: f64,
    /// `(steps + 1) × n_paths × dim`.
    pub states: Vec<f64>,
    /// `(steps + 1) × n_paths`.
    pub regimes: Vec<usize>,
    /// Brownian increments, `steps × n_paths × dim`.
    pub dw: Vec<f64>,
}

impl ForwardPaths {
    pub(crate) fn states_at(&self, k: usize) -> &[f64] {
        let w = self.n_paths * self.dim;
        &self.states[k * w..(k + 1) * w]
    }

    pub(crate) fn regimes_at(&self, k: usize) -> &[usize] {
        &self.regimes[k * self.n_paths..(k + 1) * self.n_paths]
    }

    pub(crate) fn dw_at(&self, k: usize) -> &[f64] {
        let w = self.n_paths * self.dim;
        &self.dw[k * w..(k + 1) * w]
    }
}

/// Starts at `x + dispersion · N(0, I)` with regimes assigned round-robin.
pub(crate) fn simulate(
    problem: &ControlProblem,
    x: &[f64],
    dispersion: f64,
    dt: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ForwardPaths> {
    let d = problem.dim();
    let m = problem.n_controls();
    let mut rngs: Vec<ChaCha8Rng> = (0..n_paths).map(|p| path_rng(seed, p as u64)).collect();
    let mut states = vec![0.0; (steps + 1) * n_paths * d];
    let mut regimes = vec![0usize; (steps + 1) * n_paths];
    let mut dw = vec![0.0; steps * n_paths * d];
    for (p, rng) in rngs.iter_mut().enumerate() {
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            states[p * d + i] = x[i] + dispersion * z;
        }
        regimes[p] = p % m;
    }
    let sqrt_dt = dt.sqrt();
    let w = n_paths * d;
    for k in 0..steps {
        let (done, rest) = states.split_at_mut((k + 1) * w);
        let cur = &done[k * w..];
        let next = &mut rest[..w];
        let (rdone, rrest) = regimes.split_at_mut((k + 1) * n_paths);
        let rcur = &rdone[k * n_paths..];
        let rnext = &mut rrest[..n_paths];
        let dwk = &mut dw[k * w..(k + 1) * w];
        let t = k as f64 * dt;
        next.par_chunks_mut(d)
            .zip(rnext.par_iter_mut())
            .zip(dwk.par_chunks_mut(d))
            .zip(rngs.par_iter_mut())
            .enumerate()
            .try_for_each(|(p, (((xn, an), dwp), rng))| -> Result<()> {
                let mut step = EulerStep::new(d);
                let mut clock = RegimeClock::new(problem, None);
                for v in dwp.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * sqrt_dt;
                }
                xn.copy_from_slice(&cur[p * d..(p + 1) * d]);
                step.advance(problem, xn, rcur[p], dt, dwp);
                if xn.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("forward paths"));
                }
                *an = clock.step(t, dt, rng)?.mark.unwrap_or(rcur[p]);
                Ok(())
            })?;
    }
    Ok(ForwardPaths { dim: d, n_paths, steps, dt, states, regimes, dw })
}

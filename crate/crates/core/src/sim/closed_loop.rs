use rayon::prelude::*;

use super::{draw_increments, path_rng, step_count, EulerStep, DEFAULT_BLOW_UP_RADIUS};
use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::stats::{mean_se, Estimate};

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub blow_up_radius: f64,
}

impl ClosedLoopConfig {
    pub fn new(dim: usize, horizon: f64, dt: f64, n_paths: usize) -> Self {
        Self { x0: vec![0.0; dim], horizon, dt, n_paths, blow_up_radius: DEFAULT_BLOW_UP_RADIUS }
    }
}

/// `(1/T) E[∫_0^T f(X_t, α(X_t), 0) dt]` under the feedback `α`, left-point
/// rule, with the SE across paths.
pub fn closed_loop_average(
    problem: &ControlProblem,
    feedback: &(dyn Fn(&[f64]) -> usize + Sync),
    cfg: &ClosedLoopConfig,
    seed: u64,
) -> Result<Estimate> {
    let steps = step_count(cfg.dt, cfg.horizon)?;
    let d = problem.dim();
    if cfg.x0.len() != d || cfg.n_paths == 0 {
        return Err(Error::InvalidArgument("closed loop needs x0 of the state dimension and n_paths > 0".into()));
    }
    let m = problem.n_controls();
    let sqrt_dt = cfg.dt.sqrt();
    let horizon = steps as f64 * cfg.dt;
    let averages: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut step = EulerStep::new(d);
            let mut dw = vec![0.0; d];
            let mut x = cfg.x0.clone();
            let mut acc = 0.0;
            for k in 0..steps {
                let a = feedback(&x);
                if a >= m {
                    return Err(Error::InvalidArgument(format!("feedback returned control {a}")));
                }
                acc += problem.cost(&x, a, 0.0) * cfg.dt;
                draw_increments(&mut rng, sqrt_dt, &mut dw);
                step.advance(problem, &mut x, a, cfg.dt, &dw);
                let r2: f64 = x.iter().map(|v| v * v).sum();
                if !(r2.sqrt() <= cfg.blow_up_radius) {
                    return Err(Error::BlowUp { radius: cfg.blow_up_radius, time: (k + 1) as f64 * cfg.dt });
                }
            }
            Ok(acc / horizon)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_se(&averages))
}

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ControlProblem;
use crate::sim::{simulate_paths, TiltSpec};
use crate::stats::{mean_se, Estimate};

type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type RateFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Payoff `e^{∫_0^T ρ} g(X_T) + ∫_0^T ρ_s e^{∫_0^s ρ} r(X_s) ds`.
#[derive(Clone)]
pub struct PayoffSpec {
    pub terminal: StateFn,
    pub running: StateFn,
    pub rate: RateFn,
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PayoffSpec").finish_non_exhaustive()
    }
}

impl PayoffSpec {
    /// Terminal payoff only (`ρ ≡ 0`).
    pub fn terminal(g: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { terminal: Arc::new(g), running: Arc::new(|_| 0.0), rate: Arc::new(|_, _| 0.0) }
    }

    /// The sandwich payoff with `g = h − φ`, `r = φ − λ` and a constant rate.
    pub fn sandwich(
        h: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        phi: impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static,
        lambda: f64,
        rate: f64,
    ) -> Self {
        let phi2 = phi.clone();
        Self {
            terminal: Arc::new(move |x| h(x) - phi(x)),
            running: Arc::new(move |x| phi2(x) - lambda),
            rate: Arc::new(move |_, _| rate),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualEstimate {
    /// Largest tilted estimate.
    pub value: f64,
    pub per_tilt: Vec<Estimate>,
    pub best: usize,
}

/// Max over the tilt family of `E^ν[payoff]`, each simulated under `P^ν`.
/// A lower bound on the supremum over all admissible tilts.
#[allow(clippy::too_many_arguments)]
pub fn dual_bound_estimate(
    problem: &ControlProblem,
    x: &[f64],
    a: usize,
    tilts: &[TiltSpec],
    payoff: &PayoffSpec,
    horizon: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<DualEstimate> {
    if tilts.is_empty() {
        return Err(Error::InvalidArgument("tilt family is empty".into()));
    }
    let mut per_tilt = Vec::with_capacity(tilts.len());
    for tilt in tilts {
        let ens = simulate_paths(problem, x, a, dt, horizon, n_paths, Some(tilt), seed)?;
        let last = ens.n_times() - 1;
        let samples: Vec<f64> = (0..ens.n_paths())
            .map(|p| {
                let mut log_disc = 0.0_f64;
                let mut running = 0.0;
                for k in 0..last {
                    let t = ens.times()[k];
                    let xk = ens.state(p, k);
                    let rho = (payoff.rate)(t, xk);
                    running += rho * log_disc.exp() * (payoff.running)(xk) * dt;
                    log_disc += rho * dt;
                }
                log_disc.exp() * (payoff.terminal)(ens.state(p, last)) + running
            })
            .collect();
        per_tilt.push(mean_se(&samples));
    }
    let (best, value) = per_tilt
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, e)| if e.mean > acc.1 { (i, e.mean) } else { acc });
    Ok(DualEstimate { value, per_tilt, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou() -> ControlProblem {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = -x[0])
            .diffusion(|_, _, out| out[0] = 2f64.sqrt())
            .gamma(1.0)
            .build()
            .unwrap()
    }

    #[test]
    fn zero_payoff() {
        let tilts = [TiltSpec::constant(1.0, 1).unwrap()];
        let payoff = PayoffSpec::sandwich(|x| x[0], |x| x[0], 0.0, 0.0);
        let est = dual_bound_estimate(&ou(), &[1.0], 0, &tilts, &payoff, 1.0, 0.01, 100, 1).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn untilted_quadratic_moment() {
        let tilts = [TiltSpec::constant(1.0, 1).unwrap()];
        let payoff = PayoffSpec::terminal(|x| -x[0] * x[0] / 2.0);
        let (x, t) = (1.0f64, 1.0f64);
        let est = dual_bound_estimate(&ou(), &[x], 0, &tilts, &payoff, t, 0.001, 20_000, 2).unwrap();
        let exact = -(x * x * (-2.0 * t).exp() + 1.0 - (-2.0 * t).exp()) / 2.0;
        assert!(est.per_tilt[0].within(exact, 3.0, 5e-3), "{:?} vs {exact}", est.per_tilt[0]);
    }

    #[test]
    fn larger_family_never_lowers() {
        let small = vec![TiltSpec::constant(1.0, 2).unwrap()];
        let mut big = small.clone();
        big.push(TiltSpec::constant(3.0, 2).unwrap());
        let payoff = PayoffSpec::terminal(|x| x[0].abs());
        let p = ou();
        let a = dual_bound_estimate(&p, &[0.0], 0, &small, &payoff, 0.5, 0.01, 500, 3).unwrap();
        let b = dual_bound_estimate(&p, &[0.0], 0, &big, &payoff, 0.5, 0.01, 500, 3).unwrap();
        assert!(b.value >= a.value);
    }
}

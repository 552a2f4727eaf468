//! Control problems: coefficients of the regime-switching diffusion, the
//! running cost, the parabolic initial datum and the constants of the
//! standing assumptions.
//!
//! Coefficients are opaque closures. They must be pure functions; problems are
//! shared read-only between worker threads.

mod ou;
mod poly;
mod validate;

pub use ou::{make_ou_problem, OuCoefficients};
pub use poly::{Monomial, Polynomial};
pub use validate::{dissipativity_margin, validate_problem, AssumptionCheck, ValidationReport};

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `b(x, a)` written into `out` (length `d`).
pub type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `σ(x, a)` written into `out` as a row-major `d × d` matrix.
pub type DiffusionFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `f(x, a, y)`.
pub type CostFn = Arc<dyn Fn(&[f64], &[f64], f64) -> f64 + Send + Sync>;
/// `h(x)`.
pub type DataFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ControlProblem {
    dim: usize,
    controls: Vec<Vec<f64>>,
    drift: DriftFn,
    diffusion: DiffusionFn,
    running_cost: CostFn,
    data_h: DataFn,
    gamma: f64,
    lip_b_sigma: f64,
    lip_f: f64,
    kappa: Option<f64>,
    intensity_total: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("dim", &self.dim)
            .field("controls", &self.controls)
            .field("gamma", &self.gamma)
            .field("lip_b_sigma", &self.lip_b_sigma)
            .field("lip_f", &self.lip_f)
            .field("kappa", &self.kappa)
            .field("intensity_total", &self.intensity_total)
            .finish_non_exhaustive()
    }
}

impl ControlProblem {
    pub fn builder(dim: usize) -> ProblemBuilder {
        ProblemBuilder {
            dim,
            controls: Vec::new(),
            drift: None,
            diffusion: None,
            running_cost: None,
            data_h: None,
            gamma: None,
            lip_b_sigma: 1.0,
            lip_f: 1.0,
            kappa: None,
            intensity_total: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn controls(&self) -> &[Vec<f64>] {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn control(&self, index: usize) -> &[f64] {
        &self.controls[index]
    }

    pub fn control_index(&self, point: &[f64]) -> Option<usize> {
        self.controls.iter().position(|c| c.as_slice() == point)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lip_b_sigma(&self) -> f64 {
        self.lip_b_sigma
    }

    pub fn lip_f(&self) -> f64 {
        self.lip_f
    }

    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn intensity_total(&self) -> f64 {
        self.intensity_total
    }

    /// Mass `ϑ({a})` of a single control under the uniform intensity measure.
    pub fn control_rate(&self) -> f64 {
        self.intensity_total / self.controls.len() as f64
    }

    pub fn drift_at(&self, x: &[f64], control: usize, out: &mut [f64]) {
        (self.drift)(x, &self.controls[control], out)
    }

    pub fn diffusion_at(&self, x: &[f64], control: usize, out: &mut [f64]) {
        (self.diffusion)(x, &self.controls[control], out)
    }

    /// Drift at an arbitrary point of `R^q`, not necessarily in the control list.
    pub fn drift_at_point(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.drift)(x, a, out)
    }

    pub fn diffusion_at_point(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, a, out)
    }

    pub fn cost(&self, x: &[f64], control: usize, y: f64) -> f64 {
        (self.running_cost)(x, &self.controls[control], y)
    }

    pub fn cost_at_point(&self, x: &[f64], a: &[f64], y: f64) -> f64 {
        (self.running_cost)(x, a, y)
    }

    pub fn data(&self, x: &[f64]) -> f64 {
        (self.data_h)(x)
    }

    pub fn with_lip_f(mut self, lip_f: f64) -> Result<Self> {
        positive("lip_f", lip_f)?;
        self.lip_f = lip_f;
        Ok(self)
    }

    pub fn with_lip_b_sigma(mut self, lip: f64) -> Result<Self> {
        positive("lip_b_sigma", lip)?;
        self.lip_b_sigma = lip;
        Ok(self)
    }

    pub fn with_intensity_total(mut self, total: f64) -> Result<Self> {
        positive("intensity_total", total)?;
        self.intensity_total = total;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: Option<f64>) -> Result<Self> {
        if let Some(k) = kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidProblem(format!("kappa must be nonnegative, got {k}")));
            }
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn with_running_cost(mut self, cost: CostFn) -> Self {
        self.running_cost = cost;
        self
    }

    pub fn with_data(mut self, data: DataFn) -> Self {
        self.data_h = data;
        self
    }

    /// Whether `f` ignores its `y` argument on a sample of points.
    pub fn cost_independent_of_y(&self, radius: f64, n_samples: usize, seed: u64) -> bool {
        validate::cost_y_spread(self, radius, n_samples, seed) <= validate::TOLERANCE
    }
}

pub struct ProblemBuilder {
    dim: usize,
    controls: Vec<Vec<f64>>,
    drift: Option<DriftFn>,
    diffusion: Option<DiffusionFn>,
    running_cost: Option<CostFn>,
    data_h: Option<DataFn>,
    gamma: Option<f64>,
    lip_b_sigma: f64,
    lip_f: f64,
    kappa: Option<f64>,
    intensity_total: f64,
}

impl ProblemBuilder {
    pub fn controls(mut self, controls: Vec<Vec<f64>>) -> Self {
        self.controls = controls;
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn diffusion(
        mut self,
        f: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Some(Arc::new(f));
        self
    }

    pub fn running_cost(mut self, f: impl Fn(&[f64], &[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.running_cost = Some(Arc::new(f));
        self
    }

    pub fn running_cost_arc(mut self, f: CostFn) -> Self {
        self.running_cost = Some(f);
        self
    }

    pub fn data(mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.data_h = Some(Arc::new(f));
        self
    }

    pub fn data_arc(mut self, f: DataFn) -> Self {
        self.data_h = Some(f);
        self
    }

    pub fn gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn lipschitz(mut self, lip_b_sigma: f64, lip_f: f64) -> Self {
        self.lip_b_sigma = lip_b_sigma;
        self.lip_f = lip_f;
        self
    }

    pub fn kappa(mut self, kappa: f64) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn intensity_total(mut self, total: f64) -> Self {
        self.intensity_total = total;
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        if self.dim == 0 {
            return Err(Error::InvalidProblem("state dimension must be positive".into()));
        }
        if self.controls.is_empty() {
            return Err(Error::InvalidProblem("control list is empty".into()));
        }
        let q = self.controls[0].len();
        for (i, c) in self.controls.iter().enumerate() {
            if c.len() != q {
                return Err(Error::InvalidProblem(format!(
                    "control {i} has length {}, expected {q}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!("control {i} is not finite")));
            }
            if self.controls[..i].contains(c) {
                return Err(Error::InvalidProblem(format!("duplicate control {c:?}")));
            }
        }
        let gamma = self
            .gamma
            .ok_or_else(|| Error::InvalidProblem("dissipativity constant gamma is required".into()))?;
        positive("gamma", gamma)?;
        positive("lip_b_sigma", self.lip_b_sigma)?;
        positive("lip_f", self.lip_f)?;
        positive("intensity_total", self.intensity_total)?;
        if let Some(k) = self.kappa {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidProblem(format!("kappa must be nonnegative, got {k}")));
            }
        }
        let drift = self
            .drift
            .ok_or_else(|| Error::InvalidProblem("drift is required".into()))?;
        let diffusion = self
            .diffusion
            .ok_or_else(|| Error::InvalidProblem("diffusion is required".into()))?;
        Ok(ControlProblem {
            dim: self.dim,
            controls: self.controls,
            drift,
            diffusion,
            running_cost: self.running_cost.unwrap_or_else(|| Arc::new(|_, _, _| 0.0)),
            data_h: self.data_h.unwrap_or_else(|| Arc::new(|_| 0.0)),
            gamma,
            lip_b_sigma: self.lip_b_sigma,
            lip_f: self.lip_f,
            kappa: self.kappa,
            intensity_total: self.intensity_total,
        })
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidProblem(format!("{name} must be positive, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ProblemBuilder {
        ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|x, _, out| out[0] = -x[0])
            .diffusion(|_, _, out| out[0] = 1.0)
            .gamma(1.0)
    }

    #[test]
    fn rejects_duplicate_controls() {
        let err = base().controls(vec![vec![1.0], vec![1.0]]).build().unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)));
    }

    #[test]
    fn rejects_empty_controls_and_missing_gamma() {
        assert!(base().controls(vec![]).build().is_err());
        let no_gamma = ControlProblem::builder(1)
            .controls(vec![vec![0.0]])
            .drift(|_, _, _| {})
            .diffusion(|_, _, _| {})
            .build();
        assert!(no_gamma.is_err());
    }

    #[test]
    fn uniform_intensity_split() {
        let p = base()
            .controls(vec![vec![-1.0], vec![1.0]])
            .intensity_total(0.5)
            .build()
            .unwrap();
        assert_eq!(p.control_rate(), 0.25);
        assert_eq!(p.control_index(&[1.0]), Some(1));
    }
}

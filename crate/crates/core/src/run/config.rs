//! Run configuration: one TOML file per run. Every numerical knob lives here
//! with a default; only `seed` and `[problem]` are mandatory.

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bsde::{BasisFamily, RegressionBasis};
use crate::error::{Error, Result};
use crate::model::{make_ou_problem, ControlProblem, Polynomial};
use crate::pde::{BoundaryPolicy, Grid, PhiEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Validate,
    Simulate,
    Pde,
    Bsde,
    Asymptotics,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Validate, Experiment::Simulate, Experiment::Pde, Experiment::Bsde, Experiment::Asymptotics];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::Pde => "pde",
            Experiment::Bsde => "bsde",
            Experiment::Asymptotics => "asymptotics",
        }
    }

    /// Comma-separated list, e.g. `pde,bsde`.
    pub fn parse_list(text: &str) -> Result<Vec<Experiment>> {
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let e = Experiment::ALL
                .into_iter()
                .find(|e| e.name() == item)
                .ok_or_else(|| Error::Config(format!("unknown experiment `{item}`")))?;
            out.push(e);
        }
        if out.is_empty() {
            return Err(Error::Config("experiment list is empty".into()));
        }
        Ok(out)
    }
}

fn all_experiments() -> Vec<Experiment> {
    Experiment::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "all_experiments")]
    pub experiments: Vec<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub reference: References,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub discounted: DiscountedSection,
    #[serde(default)]
    pub ergodic: ErgodicSection,
    #[serde(default)]
    pub parabolic: ParabolicSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub bsde: BsdeSection,
    #[serde(default)]
    pub closed_loop: ClosedLoopSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// One matrix (vector) shared by all controls, or one per control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerControl<T> {
    Shared(T),
    Each(Vec<T>),
}

impl<T: Clone> PerControl<T> {
    fn get(&self, i: usize, m: usize, what: &str) -> Result<T> {
        match self {
            PerControl::Shared(t) => Ok(t.clone()),
            PerControl::Each(v) if v.len() == m => Ok(v[i].clone()),
            PerControl::Each(v) => {
                Err(Error::Config(format!("`{what}` lists {} entries for {m} controls", v.len())))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ProblemSpec {
    /// A catalog entry, see [`super::builtins`].
    Builtin { name: String },
    Ou(OuSpec),
    CustomPolynomial(PolynomialSpec),
}

/// `b(x, a) = B(a) x + D(a)`, `σ = Σ(a)`, cost polynomial in `(x, a)` plus
/// `cost_y · y`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuSpec {
    pub controls: Vec<Vec<f64>>,
    pub b: PerControl<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<PerControl<Vec<f64>>>,
    pub sigma: PerControl<Vec<Vec<f64>>>,
    pub gamma: f64,
    #[serde(default)]
    pub cost: Polynomial,
    #[serde(default)]
    pub cost_y: f64,
    #[serde(default)]
    pub data: Polynomial,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "one")]
    pub intensity_total: f64,
}

/// Drift and diffusion entries as polynomials in `(x, a)`; `diffusion` is the
/// row-major `d × d` matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolynomialSpec {
    pub dim: usize,
    pub controls: Vec<Vec<f64>>,
    pub drift: Vec<Polynomial>,
    pub diffusion: Vec<Polynomial>,
    pub gamma: f64,
    #[serde(default)]
    pub cost: Polynomial,
    #[serde(default)]
    pub cost_y: f64,
    #[serde(default)]
    pub data: Polynomial,
    #[serde(default = "one")]
    pub lip_b_sigma: f64,
    #[serde(default = "one")]
    pub lip_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "one")]
    pub intensity_total: f64,
}

fn one() -> f64 {
    1.0
}

/// Known values the run is checked against.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct References {
    pub lambda: Option<f64>,
    /// Allowed `|λ_vanishing discount − lambda|`.
    #[serde(default = "default_lambda_tolerance")]
    pub lambda_tolerance: f64,
    pub invariant_mean: Option<Vec<f64>>,
    pub invariant_variance: Option<Vec<f64>>,
}

fn default_lambda_tolerance() -> f64 {
    2e-2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationSection {
    pub n_samples: usize,
    pub box_radius: f64,
}

impl Default for ValidationSection {
    fn default() -> Self {
        Self { n_samples: 10_000, box_radius: 10.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub boundary: BoundaryPolicy,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { lower: vec![-6.0], upper: vec![6.0], h: 0.01, boundary: BoundaryPolicy::OneSidedExtrapolation }
    }
}

impl GridSection {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.lower.clone(), self.upper.clone(), self.h, self.boundary)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscountedSection {
    pub betas: Vec<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DiscountedSection {
    fn default() -> Self {
        Self { betas: vec![0.5, 0.25, 0.1], tol: 1e-9, max_iter: crate::pde::DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErgodicSection {
    pub betas: Vec<f64>,
    pub tol: f64,
    pub phi: PhiEstimate,
}

impl Default for ErgodicSection {
    fn default() -> Self {
        Self { betas: vec![0.4, 0.2, 0.1, 0.05], tol: 1e-9, phi: PhiEstimate::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParabolicSection {
    pub dt: f64,
    pub t_list: Vec<f64>,
}

impl Default for ParabolicSection {
    fn default() -> Self {
        Self { dt: 0.01, t_list: vec![5.0, 10.0, 20.0, 50.0] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub dt: f64,
    pub n_paths: usize,
    /// Start pair of the coupled contraction estimate.
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    /// Constant control for the contraction and invariant-measure runs.
    pub control: usize,
    pub times: Vec<f64>,
    pub burn_in: f64,
    pub n_samples: usize,
    pub invariant_dt: f64,
    pub thinning: usize,
    pub n_chains: usize,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_paths: 10_000,
            x: vec![1.0],
            x_prime: vec![0.0],
            control: 0,
            times: vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            burn_in: 10.0,
            n_samples: 20_000,
            invariant_dt: 0.01,
            thinning: 50,
            n_chains: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BsdeSection {
    pub beta: f64,
    pub n_list: Vec<f64>,
    pub x: Vec<f64>,
    pub control: usize,
    pub dt: f64,
    pub n_paths: usize,
    pub dispersion: f64,
    pub truncation_tail: f64,
    pub basis_family: BasisFamily,
    pub basis_degree: u32,
    pub clip_radius: f64,
}

impl Default for BsdeSection {
    fn default() -> Self {
        let basis = RegressionBasis::default();
        Self {
            beta: 0.5,
            n_list: vec![0.0, 2.0, 10.0, 50.0],
            x: vec![0.0],
            control: 0,
            dt: 0.02,
            n_paths: 20_000,
            dispersion: 1.0,
            truncation_tail: 1e-3,
            basis_family: basis.family,
            basis_degree: basis.degree,
            clip_radius: basis.clip_radius,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosedLoopSection {
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub x0: Vec<f64>,
}

impl Default for ClosedLoopSection {
    fn default() -> Self {
        Self { horizon: 100.0, dt: 0.01, n_paths: 1000, x0: vec![0.0] }
    }
}

/// Asserted tolerances. A failed check makes the run exit with code 4.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Routes to `λ` must agree within `lambda_relative · (1 + |λ|)`.
    pub lambda_relative: f64,
    /// Each route against `reference.lambda`, absolute.
    pub route_vs_reference: f64,
    pub ergodic_residual: f64,
    pub lipschitz_factor: f64,
    pub contraction_slope_relative: f64,
    pub invariant_variance_relative: f64,
    pub bsde_relative: f64,
    /// Allowed downward step of `Y_0` in `n`, in combined SEs.
    pub monotone_se: f64,
    /// Slack in SEs for the constant-policy and invariant-mean checks.
    pub mc_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lambda_relative: 0.05,
            route_vs_reference: 0.05,
            ergodic_residual: 0.05,
            lipschitz_factor: 1.1,
            contraction_slope_relative: 0.10,
            invariant_variance_relative: 0.05,
            bsde_relative: 0.05,
            monotone_se: 2.0,
            mc_se: 3.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Positivity and shape rules that serde cannot express.
    pub fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {v}")))
            }
        };
        positive("grid.h", self.grid.h)?;
        positive("parabolic.dt", self.parabolic.dt)?;
        positive("simulation.dt", self.simulation.dt)?;
        positive("simulation.invariant_dt", self.simulation.invariant_dt)?;
        positive("bsde.dt", self.bsde.dt)?;
        positive("bsde.beta", self.bsde.beta)?;
        positive("closed_loop.dt", self.closed_loop.dt)?;
        positive("closed_loop.horizon", self.closed_loop.horizon)?;
        positive("validation.box_radius", self.validation.box_radius)?;
        for (name, list) in [("discounted.betas", &self.discounted.betas), ("ergodic.betas", &self.ergodic.betas)] {
            if list.is_empty() {
                return Err(Error::Config(format!("`{name}` is empty")));
            }
            for b in list {
                positive(name, *b)?;
            }
        }
        if self.experiments.is_empty() {
            return Err(Error::Config("`experiments` is empty".into()));
        }
        if self.grid.lower.len() != self.grid.upper.len() {
            return Err(Error::Config("`grid.lower` and `grid.upper` differ in length".into()));
        }
        if let ProblemSpec::Builtin { name } = &self.problem {
            if !super::builtins::names().contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown builtin `{name}`")));
            }
        }
        Ok(())
    }

    /// Problem spec with builtin references resolved.
    pub fn resolved_problem(&self) -> Result<ProblemSpec> {
        match &self.problem {
            ProblemSpec::Builtin { name } => {
                let inner = super::builtins::config(name)?;
                match inner.problem {
                    ProblemSpec::Builtin { .. } => Err(Error::Config(format!("builtin `{name}` refers to another builtin"))),
                    spec => Ok(spec),
                }
            }
            spec => Ok(spec.clone()),
        }
    }

    pub fn build_problem(&self) -> Result<ControlProblem> {
        self.resolved_problem()?.build()
    }

    pub fn is_ou(&self) -> bool {
        matches!(self.resolved_problem(), Ok(ProblemSpec::Ou(_)))
    }

    pub fn basis(&self) -> Result<RegressionBasis> {
        RegressionBasis::new(self.bsde.basis_family, self.bsde.basis_degree, self.bsde.clip_radius)
    }

    /// Canonical re-serialization of the parsed config (defaults filled in).
    pub fn canonical_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_text()?.as_bytes())))
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("`{what}` must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn check_y_slope(cost_y: f64) -> Result<()> {
    if cost_y > 0.0 || !cost_y.is_finite() {
        return Err(Error::Config(format!("`cost_y` must be nonpositive, got {cost_y}")));
    }
    Ok(())
}

impl ProblemSpec {
    pub fn build(&self) -> Result<ControlProblem> {
        match self {
            ProblemSpec::Builtin { name } => super::builtins::problem(name),
            ProblemSpec::Ou(spec) => spec.build(),
            ProblemSpec::CustomPolynomial(spec) => spec.build(),
        }
    }
}

impl OuSpec {
    pub fn build(&self) -> Result<ControlProblem> {
        check_y_slope(self.cost_y)?;
        let m = self.controls.len();
        if m == 0 {
            return Err(Error::Config("`problem.controls` is empty".into()));
        }
        let mut bs = Vec::with_capacity(m);
        let mut ds = Vec::with_capacity(m);
        let mut ss = Vec::with_capacity(m);
        for i in 0..m {
            let b = matrix(&self.b.get(i, m, "b")?, "b")?;
            let dim = b.nrows();
            let d = match &self.d {
                Some(d) => DVector::from_vec(d.get(i, m, "d")?),
                None => DVector::zeros(dim),
            };
            bs.push(b);
            ds.push(d);
            ss.push(matrix(&self.sigma.get(i, m, "sigma")?, "sigma")?);
        }
        let table = self.controls.clone();
        let index = move |a: &[f64]| table.iter().position(|c| c.as_slice() == a).unwrap_or(0);
        let (i1, i2, i3) = (index.clone(), index.clone(), index);
        let cost = self.cost.clone();
        let slope = self.cost_y;
        let data = self.data.clone();
        let problem = make_ou_problem(
            move |a| bs[i1(a)].clone(),
            move |a| ds[i2(a)].clone(),
            move |a| ss[i3(a)].clone(),
            self.controls.clone(),
            self.gamma,
            Arc::new(move |x, a, y| cost.eval(x, a) + slope * y),
            Arc::new(move |x| data.eval(x, &[])),
        )
        .map_err(|e| match e {
            Error::InvalidProblem(msg) => Error::Config(msg),
            other => other,
        })?;
        let problem = problem.with_kappa(self.kappa)?.with_intensity_total(self.intensity_total)?;
        match self.lip_f {
            Some(l) => problem.with_lip_f(l),
            None => Ok(problem),
        }
    }
}

impl PolynomialSpec {
    pub fn build(&self) -> Result<ControlProblem> {
        check_y_slope(self.cost_y)?;
        let d = self.dim;
        if self.drift.len() != d || self.diffusion.len() != d * d {
            return Err(Error::Config(format!(
                "custom-polynomial problem of dimension {d} needs {d} drift and {} diffusion entries",
                d * d
            )));
        }
        let (drift, diffusion) = (self.drift.clone(), self.diffusion.clone());
        let (cost, data, slope) = (self.cost.clone(), self.data.clone(), self.cost_y);
        let mut builder = ControlProblem::builder(d)
            .controls(self.controls.clone())
            .drift(move |x, a, out| {
                for (o, p) in out.iter_mut().zip(&drift) {
                    *o = p.eval(x, a);
                }
            })
            .diffusion(move |x, a, out| {
                for (o, p) in out.iter_mut().zip(&diffusion) {
                    *o = p.eval(x, a);
                }
            })
            .running_cost(move |x, a, y| cost.eval(x, a) + slope * y)
            .data(move |x| data.eval(x, &[]))
            .gamma(self.gamma)
            .lipschitz(self.lip_b_sigma, self.lip_f)
            .intensity_total(self.intensity_total);
        if let Some(k) = self.kappa {
            builder = builder.kappa(k);
        }
        builder.build()
    }
}

//! Config-driven runs: stages `validate → simulate → pde → bsde → asymptotics`,
//! CSV artifacts and a run report.
//!
//! Exit-code contract: 0 success, 2 config error, 3 solver failure,
//! 4 tolerance failure.

pub mod builtins;
mod config;
mod report;

pub use builtins::list_builtins;
pub use config::{
    BsdeSection, ClosedLoopSection, DiscountedSection, ErgodicSection, Experiment, GridSection, OuSpec,
    ParabolicSection, PerControl, PolynomialSpec, ProblemSpec, References, RunConfig, SimulationSection, Tolerances,
    ValidationSection,
};
pub use report::{Check, RunReport, StageReport, StageStatus};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{
    constant_policy_average, kappa_warning, long_run_curve, pairwise_agreement, parabolic_fields, renormalized_gap,
    verify_lambda_via_control,
};
use crate::bsde::{penalization_sweep, truncation_horizon, BsdeConfig};
use crate::error::{Error, Result};
use crate::model::{validate_problem, ControlProblem};
use crate::pde::{
    extract_feedback, solve_discounted, solve_ergodic_with, ErgodicOptions, ErgodicPair, Grid, Policy,
};
use crate::sim::{contraction_log_slope, estimate_contraction, estimate_invariant_measure, InvariantSampling};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

/// Absolute floor for comparisons that hold exactly in exact arithmetic.
const ROUNDOFF: f64 = 1e-8;

/// Exit code for an error returned by [`run_experiment`].
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// A TOML path or `builtin:NAME`.
    pub config: String,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub experiments: Option<Vec<Experiment>>,
}

impl RunOptions {
    pub fn new(config: impl Into<String>) -> Self {
        Self { config: config.into(), ..Self::default() }
    }
}

/// Reads `builtin:NAME` from the catalog, anything else from disk.
pub fn load_config(source: &str) -> Result<RunConfig> {
    match source.strip_prefix("builtin:") {
        Some(name) => builtins::config(name),
        None => {
            let text = fs::read_to_string(source).map_err(|e| Error::Config(format!("cannot read {source}: {e}")))?;
            RunConfig::from_toml(&text)
        }
    }
}

fn default_out_dir(source: &str) -> PathBuf {
    let stem = match source.strip_prefix("builtin:") {
        Some(name) => name.to_string(),
        None => Path::new(source).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into()),
    };
    PathBuf::from("runs").join(stem)
}

/// Loads the config, applies the overrides and runs the selected stages.
/// Tolerance failures are reported in the returned report (exit code 4), not
/// as errors.
pub fn run_experiment(opts: &RunOptions) -> Result<RunReport> {
    let cfg = load_config(&opts.config)?;
    let hash = cfg.hash()?;
    let mut cfg = cfg;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(list) = &opts.experiments {
        if list.is_empty() {
            return Err(Error::Config("experiment list is empty".into()));
        }
        cfg.experiments = list.clone();
    }
    let out = opts.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| default_out_dir(&opts.config));
    run_config(&cfg, &opts.config, &hash, &out)
}

/// Per-stage seed, derived from the run seed by stream selection.
pub fn stage_seed(seed: u64, stage: Experiment) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64 + 1);
    rng.next_u64()
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    problem: ControlProblem,
    grid: Grid,
    out: &'a Path,
    artifacts: Vec<String>,
    headline: BTreeMap<String, f64>,
    pair: Option<ErgodicPair>,
    policy: Option<Policy>,
}

impl Ctx<'_> {
    fn artifact(&mut self, rel: &str) -> PathBuf {
        self.artifacts.push(rel.to_string());
        self.out.join(rel)
    }

    fn put(&mut self, key: impl Into<String>, value: f64) {
        self.headline.insert(key.into(), value);
    }

    fn ergodic_pair(&mut self, stage: &mut StageReport) -> Result<ErgodicPair> {
        if let Some(p) = &self.pair {
            return Ok(p.clone());
        }
        let e = &self.cfg.ergodic;
        let mut opts = ErgodicOptions::new(e.tol);
        opts.phi = e.phi;
        opts.max_iter = self.cfg.discounted.max_iter;
        let pair = solve_ergodic_with(&self.problem, &self.grid, &e.betas, &opts)?;
        stage.warnings.extend(pair.warnings.iter().cloned());
        self.pair = Some(pair.clone());
        Ok(pair)
    }

    fn feedback(&mut self, stage: &mut StageReport) -> Result<Policy> {
        if let Some(p) = &self.policy {
            return Ok(p.clone());
        }
        let pair = self.ergodic_pair(stage)?;
        let policy = extract_feedback(&self.problem, &self.grid, &pair)?;
        self.policy = Some(policy.clone());
        Ok(policy)
    }
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Runs an already loaded config into `out`.
pub fn run_config(cfg: &RunConfig, source: &str, config_hash: &str, out: &Path) -> Result<RunReport> {
    cfg.check()?;
    let started = Instant::now();
    let problem = cfg.build_problem()?;
    let grid = cfg.grid.build().map_err(|e| Error::Config(format!("grid: {e}")))?;
    if grid.dim() != problem.dim() {
        return Err(Error::Config(format!("grid dimension {} differs from the problem dimension {}", grid.dim(), problem.dim())));
    }
    fs::create_dir_all(out.join("curves"))?;
    fs::create_dir_all(out.join("fields"))?;
    let mut ctx = Ctx {
        cfg,
        problem,
        grid,
        out,
        artifacts: Vec::new(),
        headline: BTreeMap::new(),
        pair: None,
        policy: None,
    };

    let mut stages = Vec::new();
    for stage in Experiment::ALL {
        let seed = stage_seed(cfg.seed, stage);
        let mut rep = StageReport::new(stage, seed);
        if !cfg.experiments.contains(&stage) {
            rep.status = StageStatus::Skipped;
            stages.push(rep);
            continue;
        }
        info!("stage {}", stage.name());
        let t0 = Instant::now();
        match stage {
            Experiment::Validate => stage_validate(&mut ctx, &mut rep)?,
            Experiment::Simulate => stage_simulate(&mut ctx, &mut rep)?,
            Experiment::Pde => stage_pde(&mut ctx, &mut rep)?,
            Experiment::Bsde => stage_bsde(&mut ctx, &mut rep)?,
            Experiment::Asymptotics => stage_asymptotics(&mut ctx, &mut rep)?,
        }
        rep.seconds = t0.elapsed().as_secs_f64();
        stages.push(rep);
    }

    let mut artifacts = ctx.artifacts;
    artifacts.push("run_report.json".into());
    artifacts.push("run_report.kv".into());
    artifacts.sort();
    let mut report = RunReport {
        config_source: source.to_string(),
        config_hash: config_hash.to_string(),
        seed: cfg.seed,
        stages,
        headline: ctx.headline,
        artifacts,
        wall_clock_seconds: 0.0,
        exit_code: EXIT_OK,
    };
    if !report.all_passed() {
        report.exit_code = EXIT_TOLERANCE;
    }
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    report.write_json(&out.join("run_report.json"))?;
    report.write_kv(&out.join("run_report.kv"))?;
    Ok(report)
}

fn stage_validate(ctx: &mut Ctx, rep: &mut StageReport) -> Result<()> {
    let v = &ctx.cfg.validation;
    let report = validate_problem(&ctx.problem, v.n_samples, v.box_radius, rep.seed)?;
    for c in &report.checks {
        // the margins carry a roundoff allowance decided by the validator
        rep.push(c.name.to_string(), c.worst_margin, 0.0, c.passed);
    }
    ctx.put("worst_dissipativity", report.worst_dissipativity);
    crate::pde::write_json_file(&ctx.artifact("validation.json"), &report)
}

fn stage_simulate(ctx: &mut Ctx, rep: &mut StageReport) -> Result<()> {
    let s = &ctx.cfg.simulation;
    let tol = &ctx.cfg.tolerances;
    let gamma = ctx.problem.gamma();
    let points = estimate_contraction(&ctx.problem, &s.x, &s.x_prime, s.control, s.dt, &s.times, s.n_paths, rep.seed)?;
    let d0: f64 = s.x.iter().zip(&s.x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut rows = Vec::new();
    let mut worst = 0.0_f64;
    for p in &points {
        let envelope = d0 * (-2.0 * gamma * p.t).exp();
        let rel_se = if p.mean > 0.0 { p.se / p.mean } else { 0.0 };
        worst = worst.max(p.mean / (envelope * (1.0 + 3.0 * rel_se)));
        rows.push(vec![p.t, p.mean, p.se, envelope]);
    }
    write_rows(&ctx.artifact("curves/contraction.csv"), &["t", "mean", "se", "envelope"], &rows)?;
    rep.at_most("contraction_envelope_ratio", worst, 1.0);
    let slope = contraction_log_slope(&points);
    ctx.put("contraction_log_slope", slope);
    let rel = (slope + 2.0 * gamma).abs() / (2.0 * gamma);
    if ctx.cfg.is_ou() {
        rep.at_most("contraction_slope_relative_error", rel, tol.contraction_slope_relative);
    } else {
        rep.warnings.push(format!("contraction slope {slope:.4} against -2 gamma reported only (not an OU problem)"));
    }

    let mut sampling = InvariantSampling::new(ctx.problem.dim());
    sampling.burn_in = s.burn_in;
    sampling.n_samples = s.n_samples;
    sampling.dt = s.invariant_dt;
    sampling.thinning = s.thinning;
    sampling.n_chains = s.n_chains;
    let control = s.control;
    let measure = estimate_invariant_measure(&ctx.problem, &|_| control, &sampling, rep.seed ^ 0x5eed)?;
    let mut rows = Vec::new();
    for i in 0..ctx.problem.dim() {
        let (mean, se, var) = (measure.mean()[i], measure.mean_se()[i], measure.variance(i));
        rows.push(vec![i as f64, mean, se, var]);
        ctx.put(format!("invariant_mean_{i}"), mean);
        ctx.put(format!("invariant_variance_{i}"), var);
        if let Some(r) = ctx.cfg.reference.invariant_mean.as_ref().and_then(|v| v.get(i)) {
            rep.at_most(format!("invariant_mean_{i}_error"), (mean - r).abs(), tol.mc_se * se);
        }
        if let Some(r) = ctx.cfg.reference.invariant_variance.as_ref().and_then(|v| v.get(i)) {
            rep.at_most(format!("invariant_variance_{i}_relative_error"), (var - r).abs() / r.abs(), tol.invariant_variance_relative);
        }
    }
    write_rows(&ctx.artifact("curves/invariant_moments.csv"), &["component", "mean", "mean_se", "variance"], &rows)
}

fn stage_pde(ctx: &mut Ctx, rep: &mut StageReport) -> Result<()> {
    let cfg = ctx.cfg;
    let tol = &cfg.tolerances;
    let origin = vec![0.0; ctx.problem.dim()];
    let bound = tol.lipschitz_factor * ctx.problem.lip_f() / ctx.problem.gamma() + 10.0 * ctx.grid.h();
    for &beta in &cfg.discounted.betas {
        let field = solve_discounted(&ctx.problem, &ctx.grid, beta, cfg.discounted.tol, cfg.discounted.max_iter)?;
        field.write_csv(&ctx.artifact(&format!("fields/discounted_beta_{beta}.csv")))?;
        field.write_metadata(&ctx.artifact(&format!("fields/discounted_beta_{beta}.json")))?;
        rep.at_most(format!("lipschitz_beta_{beta}"), field.discrete_lipschitz(), bound);
        ctx.put(format!("v_beta_{beta}_at_origin"), field.at(&origin));
    }

    let pair = ctx.ergodic_pair(rep)?;
    pair.write_csv(&ctx.artifact("fields/phi.csv"))?;
    pair.write_metadata(&ctx.artifact("fields/phi.json"))?;
    let rows: Vec<Vec<f64>> = pair.betas.iter().zip(&pair.lambda_betas).map(|(b, l)| vec![*b, *l]).collect();
    write_rows(&ctx.artifact("curves/lambda_beta.csv"), &["beta", "lambda_beta"], &rows)?;
    rep.at_most("ergodic_residual", pair.residual, tol.ergodic_residual);
    if let Some(r) = cfg.reference.lambda {
        rep.at_most("lambda_vs_reference", (pair.lambda - r).abs(), cfg.reference.lambda_tolerance);
    }
    ctx.put("lambda_vanishing_discount", pair.lambda);
    ctx.put("ergodic_residual", pair.residual);
    let policy = ctx.feedback(rep)?;
    policy.write_csv(&ctx.artifact("fields/policy.csv"))
}

fn stage_bsde(ctx: &mut Ctx, rep: &mut StageReport) -> Result<()> {
    let cfg = ctx.cfg;
    let b = &cfg.bsde;
    let tol = &cfg.tolerances;
    let mut bc = BsdeConfig::new(0.0, b.dt, b.n_paths);
    bc.basis = cfg.basis().map_err(|e| Error::Config(format!("bsde basis: {e}")))?;
    bc.dispersion = b.dispersion;
    bc.truncation_tail = b.truncation_tail;
    bc.horizon = (truncation_horizon(b.beta, b.truncation_tail) / b.dt).ceil() * b.dt;
    let sols = penalization_sweep(&ctx.problem, &b.x, b.control, b.beta, &b.n_list, &bc, rep.seed)?;

    let rows: Vec<Vec<f64>> = sols
        .iter()
        .map(|s| vec![s.n, s.y0.mean, s.y0.se, s.constraint_gap.mean, s.constraint_gap.se])
        .collect();
    write_rows(&ctx.artifact("curves/penalization.csv"), &["n", "y0", "y0_se", "gap", "gap_se"], &rows)?;
    let last = sols.last().expect("nonempty sweep");
    last.write_csv(&ctx.artifact("curves/bsde_diagnostics.csv"))?;
    let max_cond = sols.iter().flat_map(|s| s.condition_numbers.iter().copied()).fold(0.0_f64, f64::max);
    info!("largest regression condition number {max_cond:.3e}");

    for w in sols.windows(2) {
        let comb = (w[0].y0.se.powi(2) + w[1].y0.se.powi(2)).sqrt();
        rep.at_least(format!("monotone_n_{}", w[1].n), w[1].y0.mean - w[0].y0.mean, -tol.monotone_se * comb);
    }
    if ctx.problem.n_controls() == 1 {
        let worst = sols.iter().map(|s| s.constraint_gap.mean.abs()).fold(0.0_f64, f64::max);
        rep.at_most("constraint_gap_singleton", worst, 0.0);
    } else if let Some(first) = sols.iter().find(|s| s.n > 0.0) {
        let comb = (first.constraint_gap.se.powi(2) + last.constraint_gap.se.powi(2)).sqrt();
        rep.at_most("constraint_gap_decrease", last.constraint_gap.mean, first.constraint_gap.mean + tol.monotone_se * comb);
    }
    let oracle = solve_discounted(&ctx.problem, &ctx.grid, b.beta, cfg.discounted.tol, cfg.discounted.max_iter)?.at(&b.x);
    let rel = (last.y0.mean - oracle).abs() / oracle.abs().max(1e-12);
    rep.at_most("bsde_vs_pde_relative", rel, tol.bsde_relative);

    ctx.put("bsde_y0", last.y0.mean);
    ctx.put("bsde_y0_se", last.y0.se);
    ctx.put("bsde_pde_value", oracle);
    ctx.put("bsde_relative_gap", rel);
    ctx.put("bsde_constraint_gap", last.constraint_gap.mean);
    ctx.put("bsde_max_condition", max_cond);
    Ok(())
}

fn stage_asymptotics(ctx: &mut Ctx, rep: &mut StageReport) -> Result<()> {
    let cfg = ctx.cfg;
    let tol = &cfg.tolerances;
    if let Some(w) = kappa_warning(&ctx.problem, rep.seed) {
        rep.warnings.push(w);
    }
    let origin = vec![0.0; ctx.problem.dim()];
    let fields = parabolic_fields(&ctx.problem, &ctx.grid, &cfg.parabolic.t_list, cfg.parabolic.dt)?;
    let curve = long_run_curve(&fields, &origin, cfg.reference.lambda);
    curve.write_csv(&ctx.artifact("curves/long_run_average.csv"))?;
    let long_run = curve.last().map(|p| p.value).unwrap_or(f64::NAN);
    ctx.put("lambda_long_run", long_run);
    if let Some(last) = fields.last() {
        last.write_csv(&ctx.artifact("fields/parabolic_final.csv"))?;
        last.write_metadata(&ctx.artifact("fields/parabolic_final.json"))?;
    }

    let pair = ctx.ergodic_pair(rep)?;
    let lambda = pair.lambda;
    let band = tol.lambda_relative * (1.0 + lambda.abs());
    let gap = renormalized_gap(&pair, &fields)?;
    gap.write_csv(&ctx.artifact("curves/renormalized_gap.csv"))?;
    if let (Some(first), Some(last)) = (gap.points.first(), gap.points.last()) {
        let sup = gap.points.iter().map(|p| p.value).fold(0.0_f64, f64::max);
        ctx.put("gap_sup_ratio", sup);
        ctx.put("gap_oscillation_last", last.aux);
        if cfg.is_ou() {
            rep.at_most("gap_growth", sup, 2.0 * first.value + ROUNDOFF);
        }
    }

    let mut routes = vec![("vanishing_discount", lambda), ("long_run", long_run)];
    if ctx.problem.cost_independent_of_y(crate::asymptotics::PROBE_RADIUS, 200, rep.seed) {
        let c = &cfg.closed_loop;
        let policy = ctx.feedback(rep)?;
        let est = verify_lambda_via_control(&ctx.problem, &policy, &c.x0, c.horizon, c.dt, c.n_paths, rep.seed)?;
        ctx.put("lambda_closed_loop", est.mean);
        ctx.put("lambda_closed_loop_se", est.se);
        rep.at_most("closed_loop_vs_vanishing_discount", (est.mean - lambda).abs(), band);
        routes.push(("closed_loop", est.mean));
        let mut rows = vec![vec![-1.0, est.mean, est.se]];
        for a in 0..ctx.problem.n_controls() {
            let avg = constant_policy_average(&ctx.problem, a, &c.x0, c.horizon, c.dt, c.n_paths, rep.seed)?;
            rep.at_most(format!("constant_policy_{a}"), avg.mean, lambda + tol.mc_se * avg.se + ROUNDOFF * (1.0 + lambda.abs()));
            rows.push(vec![a as f64, avg.mean, avg.se]);
        }
        write_rows(&ctx.artifact("curves/closed_loop.csv"), &["policy", "mean", "se"], &rows)?;
    } else {
        rep.warnings.push("closed-loop route skipped: the running cost depends on y".into());
    }

    let values: Vec<f64> = routes.iter().map(|r| r.1).collect();
    let (worst, _) = pairwise_agreement(&values, lambda);
    rep.at_most("tauberian_pairwise", worst, band);
    if let Some(r) = cfg.reference.lambda {
        for (name, v) in &routes {
            rep.at_most(format!("{name}_vs_reference"), (v - r).abs(), tol.route_vs_reference);
        }
    }
    Ok(())
}

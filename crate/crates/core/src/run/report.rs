use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::Experiment;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Passed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: Experiment,
    pub status: StageStatus,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub seconds: f64,
}

impl StageReport {
    pub(crate) fn new(stage: Experiment, seed: u64) -> Self {
        Self { stage, status: StageStatus::Passed, checks: Vec::new(), warnings: Vec::new(), seed, seconds: 0.0 }
    }

    /// Records `value <= bound`.
    pub(crate) fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) -> bool {
        let passed = value <= bound;
        self.push(name.into(), value, bound, passed)
    }

    /// Records `value >= bound`.
    pub(crate) fn at_least(&mut self, name: impl Into<String>, value: f64, bound: f64) -> bool {
        let passed = value >= bound;
        self.push(name.into(), value, bound, passed)
    }

    /// Records a check whose verdict was decided elsewhere.
    pub(crate) fn push(&mut self, name: String, value: f64, bound: f64, passed: bool) -> bool {
        if !passed {
            self.status = StageStatus::Failed;
        }
        self.checks.push(Check { name, value, bound, passed });
        passed
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config_source: String,
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageReport>,
    /// λ estimates, residuals, gaps and other headline numbers.
    pub headline: BTreeMap<String, f64>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    pub exit_code: i32,
}

impl RunReport {
    pub fn stage(&self, stage: Experiment) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn all_passed(&self) -> bool {
        self.stages.iter().all(|s| s.status != StageStatus::Failed)
    }

    pub fn failed_checks(&self) -> Vec<(Experiment, &Check)> {
        self.stages.iter().flat_map(|s| s.checks.iter().filter(|c| !c.passed).map(move |c| (s.stage, c))).collect()
    }

    pub(crate) fn write_json(&self, path: &Path) -> Result<()> {
        crate::pde::write_json_file(path, self)
    }

    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "config_hash={}", self.config_hash);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "exit_code={}", self.exit_code);
        for s in &self.stages {
            let name = s.stage.name();
            let status = match s.status {
                StageStatus::Passed => "passed",
                StageStatus::Failed => "failed",
                StageStatus::Skipped => "skipped",
            };
            let _ = writeln!(out, "stage.{name}.status={status}");
            for c in &s.checks {
                let _ = writeln!(out, "check.{name}.{}.value={}", c.name, c.value);
                let _ = writeln!(out, "check.{name}.{}.bound={}", c.name, c.bound);
                let _ = writeln!(out, "check.{name}.{}.passed={}", c.name, c.passed);
            }
        }
        for (k, v) in &self.headline {
            let _ = writeln!(out, "headline.{k}={v}");
        }
        out
    }

    pub(crate) fn write_kv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_kv())?;
        Ok(())
    }
}

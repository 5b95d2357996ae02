//! Scenario runner: configuration, check catalog, reports and refinement
//! studies. Exit codes: 0 all checks pass or report, 1 a check failed,
//! 2 configuration error, 3 validation error.

pub mod checks;
pub mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use checks::{catalog, find, CheckOutcome, CheckSpec, Status};
pub use config::{ConfigError, Scenario, ScenarioConfig, ScenarioState, OUTPUT_ROOT_ENV};

use crate::extrapolate::{is_monotone_decreasing, loglog_slope, pairwise_orders};
use crate::io;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub module: String,
    pub anchor: String,
    #[serde(flatten)]
    pub outcome: CheckOutcome,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub version: String,
    pub scenario: String,
    pub config: ScenarioConfig,
    pub checks: Vec<CheckReport>,
    pub wall_seconds: f64,
    pub output_dir: PathBuf,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome.status != Status::Fail)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario {}  (stochpath {}, report schema {})", self.scenario, self.version, self.schema_version);
        let _ = writeln!(s, "output   {}", self.output_dir.display());
        let _ = writeln!(s, "wall     {:.2} s", self.wall_seconds);
        let _ = writeln!(s);
        let w = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(s, "{:<w$}  {:<11}  {:>10}  {:>8}  measured", "check", "status", "tolerance", "seconds");
        for c in &self.checks {
            let measured: Vec<String> = c.outcome.measured.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
            let _ = writeln!(
                s,
                "{:<w$}  {:<11}  {:>10.2e}  {:>8.2}  {}",
                c.name,
                c.outcome.status.as_str(),
                c.outcome.tolerance,
                c.seconds,
                measured.join(" ")
            );
            if !c.outcome.note.is_empty() {
                let _ = writeln!(s, "{:<w$}  note: {}", "", c.outcome.note);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "result   {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }

    pub fn write(&self) -> crate::Result<()> {
        io::write_text(&self.output_dir.join("report.json"), &serde_json::to_string_pretty(self).unwrap_or_default())?;
        io::write_text(&self.output_dir.join("report.txt"), &self.to_text())
    }
}

/// Resolves the check list of a scenario, rejecting unknown names and
/// tolerance keys (exit 2) and checks the state cannot support (exit 3).
pub fn plan(s: &Scenario) -> Result<Vec<CheckSpec>, ConfigError> {
    let cat = catalog();
    for key in s.config.tolerances.keys() {
        if !cat.iter().any(|c| c.name == key) {
            return Err(ConfigError::Parse(format!("tolerances.{key}: unknown check")));
        }
    }
    let mut out = Vec::with_capacity(s.config.checks.len());
    for name in &s.config.checks {
        let spec = cat.iter().find(|c| c.name == name).ok_or_else(|| ConfigError::Parse(format!("checks: unknown check \"{name}\"")))?;
        spec.requires.check(s).map_err(|e| ConfigError::Validation(format!("check {name}: {e}")))?;
        out.push(*spec);
    }
    Ok(out)
}

/// Runs one check; library errors become a failing outcome.
pub fn run_check(s: &Scenario, spec: &CheckSpec, dir: &Path) -> CheckReport {
    let tol = s.config.tolerance(spec.name, spec.default_tolerance);
    let mut ctx = checks::Ctx { scenario: s, tolerance: tol, dir: dir.to_path_buf(), check: spec.name, artifacts: Vec::new() };
    let t0 = Instant::now();
    let mut outcome = match (spec.run)(&mut ctx) {
        Ok(o) => o,
        Err(e) => {
            let mut o = CheckOutcome { status: Status::Fail, measured: BTreeMap::new(), tolerance: tol, note: e.to_string(), artifacts: Vec::new() };
            if let crate::Error::ConvergenceError { table } = &e {
                let rel = format!("{}/convergence_error.tsv", spec.name);
                if io::write_text(&dir.join(&rel), table).is_ok() {
                    o.artifacts.push(rel);
                }
                o.note = "convergence error; table written".into();
            }
            o
        }
    };
    outcome.artifacts.splice(0..0, ctx.artifacts);
    CheckReport { name: spec.name.into(), module: spec.module.into(), anchor: spec.anchor.into(), outcome, seconds: t0.elapsed().as_secs_f64() }
}

/// Runs every selected check of a validated scenario and writes the report.
pub fn run(s: &Scenario) -> Result<Report, ConfigError> {
    let specs = plan(s)?;
    let t0 = Instant::now();
    let checks = specs.iter().map(|spec| run_check(s, spec, &s.output_dir)).collect();
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        version: VERSION.into(),
        scenario: s.config.id.clone(),
        config: s.config.clone(),
        checks,
        wall_seconds: t0.elapsed().as_secs_f64(),
        output_dir: s.output_dir.clone(),
    };
    report.write().map_err(|e| ConfigError::Validation(format!("writing report: {e}")))?;
    Ok(report)
}

/// Loads, validates and runs a scenario file. Returns the report (if the
/// scenario got that far) and the process exit code.
pub fn run_scenario(path: &Path) -> (Option<Report>, i32, String) {
    let scenario = match Scenario::load(path) {
        Ok(s) => s,
        Err(e) => return (None, e.exit_code(), e.to_string()),
    };
    match run(&scenario) {
        Ok(r) => {
            let code = r.exit_code();
            let text = r.to_text();
            (Some(r), code, text)
        }
        Err(e) => (None, e.exit_code(), e.to_string()),
    }
}

/// Catalog rows `(name, module, anchor)`, optionally filtered by module.
pub fn list_checks(module: Option<&str>) -> Vec<(&'static str, &'static str, &'static str)> {
    catalog().into_iter().filter(|c| module.is_none_or(|m| c.module == m)).map(|c| (c.name, c.module, c.anchor)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceStatus {
    /// Errors decrease monotonically.
    Converged,
    /// Every error is at the rounding floor.
    Exact,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub check: String,
    pub parameter: String,
    pub h: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub slope: f64,
    pub status: ConvergenceStatus,
    pub required_order: Option<f64>,
}

impl ConvergenceTable {
    /// Whether the table meets the check's demanded order.
    pub fn passes(&self) -> bool {
        match self.required_order {
            None => true,
            Some(p) => self.status == ConvergenceStatus::Exact || (self.status == ConvergenceStatus::Converged && self.slope >= p),
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passes() {
            0
        } else {
            1
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} refinement in {}  status {:?}\n", self.check, self.parameter, self.status);
        let _ = writeln!(s, "{:>12}  {:>12}  {:>8}", "h", "error", "order");
        for (k, (h, e)) in self.h.iter().zip(&self.errors).enumerate() {
            let o = if k == 0 { "-".to_string() } else { format!("{:.3}", self.orders[k - 1]) };
            let _ = writeln!(s, "{h:>12.4e}  {e:>12.4e}  {o:>8}");
        }
        let slope = if self.status == ConvergenceStatus::Exact { "exact".to_string() } else { format!("{:.3}", self.slope) };
        let _ = writeln!(s, "slope {slope}");
        s
    }
}

/// Error floor below which a refinement ladder counts as exact.
pub const EXACT_FLOOR: f64 = 1e-12;

/// Runs a check's refinement ladder over `levels` levels and writes
/// `convergence_<check>.csv` under the scenario's output directory.
pub fn convergence_study(s: &Scenario, check: &str, levels: usize) -> Result<ConvergenceTable, ConfigError> {
    let spec = find(check).ok_or_else(|| ConfigError::Parse(format!("--check: unknown check \"{check}\"")))?;
    let refine = spec.refine.ok_or_else(|| ConfigError::Parse(format!("--check: {check} does not support refinement")))?;
    spec.requires.check(s).map_err(|e| ConfigError::Validation(format!("check {check}: {e}")))?;
    if levels < 2 {
        return Err(ConfigError::Parse("--levels: need at least 2".into()));
    }
    let mut h = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    for k in 0..levels {
        let (hk, ek) = (refine.run)(s, k).map_err(|e| ConfigError::Validation(format!("{check} level {k}: {e}")))?;
        h.push(hk);
        errors.push(ek);
    }
    let orders = pairwise_orders(&h, &errors);
    let status = if errors.iter().all(|e| *e < EXACT_FLOOR) {
        ConvergenceStatus::Exact
    } else if is_monotone_decreasing(&errors) {
        ConvergenceStatus::Converged
    } else {
        ConvergenceStatus::Inconclusive
    };
    let table = ConvergenceTable {
        check: check.into(),
        parameter: refine.parameter.into(),
        slope: loglog_slope(&h, &errors),
        h,
        errors,
        orders,
        status,
        required_order: refine.required_order,
    };
    let mut meta = io::Metadata::new().with("scenario", &s.config.id).with("check", check).with("parameter", refine.parameter).with("status", format!("{:?}", table.status));
    meta.timestamp = s.config.timestamp;
    let rows: Vec<Vec<f64>> = table.h.iter().zip(&table.errors).map(|(h, e)| vec![*h, *e]).collect();
    io::write_csv(&s.output_dir.join(format!("convergence_{check}.csv")), &meta, &["h", "error"], &rows)
        .map_err(|e| ConfigError::Validation(format!("writing table: {e}")))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn registry_is_sorted_unique_and_anchored() {
        let cat = catalog();
        let names: Vec<&str> = cat.iter().map(|c| c.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert_eq!(names.iter().collect::<HashSet<_>>().len(), names.len());
        let modules =
            ["quantum_state", "evolution", "stochastic_moments", "hamilton_jacobi", "retarded_action", "bell_correlations"];
        for c in &cat {
            assert!(modules.contains(&c.module), "{}", c.name);
            assert!(!c.anchor.is_empty());
        }
        for required in ["continuity_n1", "quantum_potential_identity", "bell_gap"] {
            assert!(names.contains(&required));
        }
    }

    #[test]
    fn module_filter() {
        let all = list_checks(None);
        let sub = list_checks(Some("retarded_action"));
        assert!(sub.len() < all.len() && !sub.is_empty());
        assert!(sub.iter().all(|c| c.1 == "retarded_action"));
        assert!(list_checks(Some("no_such_module")).is_empty());
    }
}

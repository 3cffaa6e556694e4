//! Experiment runner for `ripple-core`.
//!
//! Every subcommand turns an [`ExperimentConfig`] into a list of [`Check`]s
//! and a set of deterministic output files. [`write_run`] puts those files in
//! the output directory next to a `manifest.json` echoing the resolved
//! configuration; wall-clock data only ever appears in the manifest.

pub mod commands;
pub mod config;
pub mod suites;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

pub use commands::{cmd_dno_test, cmd_evolve, cmd_nf_lifetime, cmd_resonance_scan, cmd_symbol_check, run_subcommand};
pub use config::{ExperimentConfig, Profile, Subcommand};

/// Version of the CSV and manifest layouts.
pub const SCHEMA_VERSION: u32 = 1;

/// Malformed or incomplete configuration (exit code 2).
#[derive(Clone, Debug, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug)]
pub enum CmdError {
    Usage(UsageError),
    /// A numerical failure that prevents the run from producing its reports.
    Failed(ripple_core::Error),
    Io(std::io::Error),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Failed(_) | CmdError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Usage(e) => write!(f, "usage error: {e}"),
            CmdError::Failed(e) => write!(f, "run failed: {e}"),
            CmdError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl From<UsageError> for CmdError {
    fn from(e: UsageError) -> Self {
        CmdError::Usage(e)
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e)
    }
}

impl From<ripple_core::Error> for CmdError {
    /// Errors raised while validating inputs derived from the configuration
    /// are usage errors; everything else is a failed run.
    fn from(e: ripple_core::Error) -> Self {
        use ripple_core::Error as E;
        match e {
            E::InvalidGrid(_) | E::InvalidArgument(_) | E::CflViolation { .. } | E::BudgetExceeded { .. } | E::EmptyFamily | E::ModeOutOfRange { .. } => {
                CmdError::Usage(UsageError(e.to_string()))
            }
            e => CmdError::Failed(e),
        }
    }
}

/// One named pass/fail item of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance rule, e.g. `< 1e-10`.
    pub rule: String,
    pub passed: bool,
    /// Non-gating checks are reported but never change the exit code.
    pub gating: bool,
    pub detail: String,
}

impl Check {
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self { name: name.into(), value, rule: format!("< {tol:e}"), passed: value < tol, gating: true, detail: String::new() }
    }

    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, rule: format!(">= {bound:e}"), passed: value >= bound, gating: true, detail: String::new() }
    }

    pub fn within(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self { name: name.into(), value, rule: format!("{target} +- {tol}"), passed: (value - target).abs() <= tol, gating: true, detail: String::new() }
    }

    pub fn flag(name: &str, ok: bool, value: f64) -> Self {
        Self { name: name.into(), value, rule: "holds".into(), passed: ok, gating: true, detail: String::new() }
    }

    pub fn failed(name: &str, why: impl Into<String>) -> Self {
        Self { name: name.into(), value: f64::NAN, rule: "runs".into(), passed: false, gating: true, detail: why.into() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn informational(mut self) -> Self {
        self.gating = false;
        self
    }
}

/// Everything a subcommand produced, before anything touches the disk.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub checks: Vec<Check>,
    /// `(file name, contents)`; CSVs must be byte-for-byte reproducible.
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || !c.gating)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| c.gating && !c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn add_csv(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

/// Fixed-width float formatting shared by every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.15e}")
}

/// `check,value,rule,passed,gating,detail`
pub fn checks_csv(checks: &[Check]) -> Result<Vec<u8>, csv::Error> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    wr.write_record(["check", "value", "rule", "passed", "gating", "detail"])?;
    for c in checks {
        wr.write_record([c.name.clone(), fmt_f64(c.value), c.rule.clone(), c.passed.to_string(), c.gating.to_string(), c.detail.clone()])?;
    }
    wr.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Git-style object hash of the resolved configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let body = serde_json::to_string(&cfg.to_json()).expect("config serializes");
    let mut h = sha1_smol::Sha1::new();
    h.update(format!("blob {}\0", body.len()).as_bytes());
    h.update(body.as_bytes());
    h.digest().to_string()
}

/// Writes the run's files and `manifest.json` into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput, elapsed: Duration) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": concat!("ripple ", env!("CARGO_PKG_VERSION")),
        "subcommand": cfg.subcommand().name(),
        "config": cfg.to_json(),
        "config_hash": config_hash(cfg),
        "files": out.files.iter().map(|f| f.0.clone()).collect::<Vec<_>>(),
        "passed": out.passed(),
        "first_failure": out.first_failure().map(|c| c.name.clone()),
        "summary": out.summary,
        "timestamp_unix": timestamp,
        "elapsed_seconds": elapsed.as_secs_f64(),
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

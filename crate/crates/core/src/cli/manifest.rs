//! Run manifest: config echo, version, timing and one entry per check.

use serde::{Deserialize, Serialize};

use crate::cli::config::ScenarioConfig;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: Option<f64>,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    /// `"relative"`, `"absolute"` or `"bound"`; empty for flag checks.
    pub tolerance_kind: String,
    pub detail: String,
}

impl CheckResult {
    /// `|measured - expected| <= tol * |expected|`.
    pub fn relative(name: &str, measured: f64, expected: f64, tol: f64) -> Self {
        let err = (measured - expected).abs() / expected.abs();
        Self {
            name: name.into(),
            passed: err <= tol,
            measured: Some(measured),
            expected: Some(expected),
            tolerance: Some(tol),
            tolerance_kind: "relative".into(),
            detail: format!("relative error {err:.3e}"),
        }
    }

    /// `|measured - expected| <= tol`.
    pub fn absolute(name: &str, measured: f64, expected: f64, tol: f64) -> Self {
        let err = (measured - expected).abs();
        Self {
            name: name.into(),
            passed: err <= tol,
            measured: Some(measured),
            expected: Some(expected),
            tolerance: Some(tol),
            tolerance_kind: "absolute".into(),
            detail: format!("absolute error {err:.3e}"),
        }
    }

    /// `measured < bound`.
    pub fn below(name: &str, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured < bound,
            measured: Some(measured),
            expected: None,
            tolerance: Some(bound),
            tolerance_kind: "bound".into(),
            detail: String::new(),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            measured: None,
            expected: None,
            tolerance: None,
            tolerance_kind: String::new(),
            detail,
        }
    }

    pub fn failed(name: &str, error: &dyn std::fmt::Display) -> Self {
        Self::flag(name, false, format!("FAILED: {error}"))
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub scenario: String,
    pub config: ScenarioConfig,
    pub code_version: String,
    /// Seconds since the Unix epoch at start.
    pub started_at: f64,
    pub wall_clock_seconds: f64,
    pub checks: Vec<CheckResult>,
    /// Files written next to the manifest.
    pub outputs: Vec<String>,
    pub all_passed: bool,
}

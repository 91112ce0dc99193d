//! Scenario configuration: TOML with an explicit schema version, SI units.
//! Validation reports every problem at once, each with its field path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::model::{ModelParams, SpinBand};

pub const SCHEMA_VERSION: i64 = 1;
/// Populations must sum to one within this.
const POPULATION_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ReproducePaper,
    SymmetryBreak,
    FrequencySplit,
    FullVsEffective,
    BerryLoop,
    CurvatureMap,
    AdiabaticSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::ReproducePaper,
        Scenario::SymmetryBreak,
        Scenario::FrequencySplit,
        Scenario::FullVsEffective,
        Scenario::BerryLoop,
        Scenario::CurvatureMap,
        Scenario::AdiabaticSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ReproducePaper => "reproduce_paper",
            Scenario::SymmetryBreak => "symmetry_break",
            Scenario::FrequencySplit => "frequency_split",
            Scenario::FullVsEffective => "full_vs_effective",
            Scenario::BerryLoop => "berry_loop",
            Scenario::CurvatureMap => "curvature_map",
            Scenario::AdiabaticSweep => "adiabatic_sweep",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Scenarios that integrate the coupled dynamics.
    pub fn runs_full_dynamics(self) -> bool {
        matches!(self, Scenario::SymmetryBreak | Scenario::FullVsEffective | Scenario::AdiabaticSweep)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unit system for the dynamics scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Mass rescaled to hit `timescale_ratio`; integration in scaled units.
    Scaled,
    /// Parameters taken literally.
    Si,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub plus: f64,
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    /// m; scenario default when absent.
    pub position: Option<[f64; 2]>,
    /// m/s
    pub velocity: Option<[f64; 2]>,
    /// Velocity in units of `d * omega_slow`; alternative to `velocity`.
    pub velocity_slow_units: Option<[f64; 2]>,
    /// Populations of the `|+>` and `|->` spin bands at the start.
    pub populations: Populations,
    /// Angle variables (rad) of the two bands; amplitude `sqrt(p) e^{-i theta}`.
    pub phases: Populations,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            position: None,
            velocity: None,
            velocity_slow_units: None,
            populations: Populations { plus: 0.0, minus: 1.0 },
            phases: Populations { plus: 0.0, minus: 0.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub units: Units,
    /// omega_fast(0) / omega_slow for scaled runs.
    pub timescale_ratio: f64,
    pub duration_slow_periods: f64,
    pub output_samples: usize,
    /// Plaquette edge (m); `1e-3 d` when absent.
    pub plaquette_delta: Option<f64>,
    /// m; `d / 10` when absent.
    pub loop_radius: Option<f64>,
    pub loop_band: SpinBand,
    pub grid_size: usize,
    /// Half-width of the square curvature grid (m); `3 d` when absent.
    pub grid_extent: Option<f64>,
    /// Radius for the frequency split (m); 1 nm when absent.
    pub orbit_radius: Option<f64>,
    /// Timescale ratios for sweeps.
    pub ratios: Vec<f64>,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            units: Units::Scaled,
            timescale_ratio: 1e3,
            duration_slow_periods: 1.0,
            output_samples: 200,
            plaquette_delta: None,
            loop_radius: None,
            loop_band: SpinBand::Plus,
            grid_size: 64,
            grid_extent: None,
            orbit_radius: None,
            ratios: vec![1e2, 1e3, 1e4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub schema_version: i64,
    pub scenario: Scenario,
    pub model: ModelParams,
    pub initial: InitialConditions,
    pub numerics: Numerics,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Defaults for `scenario`: the original parameter set, ground-band spin.
    pub fn defaults(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            model: ModelParams::paper(),
            initial: InitialConditions::default(),
            numerics: Numerics::default(),
            output_dir: None,
        }
    }

    pub fn plaquette_delta(&self) -> f64 {
        self.numerics.plaquette_delta.unwrap_or(1e-3 * self.model.d)
    }

    pub fn loop_radius(&self) -> f64 {
        self.numerics.loop_radius.unwrap_or(0.1 * self.model.d)
    }

    pub fn grid_extent(&self) -> f64 {
        self.numerics.grid_extent.unwrap_or(3.0 * self.model.d)
    }

    pub fn orbit_radius(&self) -> f64 {
        self.numerics.orbit_radius.unwrap_or(1e-9)
    }

    /// Every violated constraint.
    pub fn issues(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut push = |path: &str, msg: String| errs.push(FieldError::new(path, msg));
        if self.schema_version != SCHEMA_VERSION {
            push("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        for (f, m) in self.model.issues() {
            push(&format!("model.{f}"), m);
        }
        let init = &self.initial;
        let pops = init.populations;
        for (name, v) in [("plus", pops.plus), ("minus", pops.minus)] {
            if !(0.0..=1.0).contains(&v) {
                push(&format!("initial.populations.{name}"), format!("must lie in [0, 1], got {v}"));
            }
        }
        if ((pops.plus + pops.minus) - 1.0).abs() > POPULATION_SUM_TOLERANCE {
            push("initial.populations", format!("must sum to 1, got {}", pops.plus + pops.minus));
        }
        for (name, v) in [("plus", init.phases.plus), ("minus", init.phases.minus)] {
            if !v.is_finite() {
                push(&format!("initial.phases.{name}"), format!("must be finite, got {v}"));
            }
        }
        for (name, v) in [("position", init.position), ("velocity", init.velocity), ("velocity_slow_units", init.velocity_slow_units)] {
            if let Some(v) = v {
                if !v.iter().all(|c| c.is_finite()) {
                    push(&format!("initial.{name}"), "components must be finite".into());
                }
            }
        }
        if init.velocity.is_some() && init.velocity_slow_units.is_some() {
            push("initial.velocity", "give either velocity or velocity_slow_units, not both".into());
        }
        let num = &self.numerics;
        if !(num.timescale_ratio >= 1.0 && num.timescale_ratio.is_finite()) {
            push("numerics.timescale_ratio", format!("must be finite and >= 1, got {}", num.timescale_ratio));
        }
        if !(num.duration_slow_periods > 0.0 && num.duration_slow_periods.is_finite()) {
            push("numerics.duration_slow_periods", format!("must be > 0, got {}", num.duration_slow_periods));
        }
        if num.output_samples == 0 {
            push("numerics.output_samples", "must be >= 1".into());
        }
        if num.grid_size < 2 {
            push("numerics.grid_size", format!("must be >= 2, got {}", num.grid_size));
        }
        for (name, v) in [
            ("plaquette_delta", num.plaquette_delta),
            ("loop_radius", num.loop_radius),
            ("grid_extent", num.grid_extent),
            ("orbit_radius", num.orbit_radius),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    push(&format!("numerics.{name}"), format!("must be > 0, got {v}"));
                }
            }
        }
        if num.ratios.is_empty() {
            push("numerics.ratios", "must not be empty".into());
        }
        for (k, r) in num.ratios.iter().enumerate() {
            if !(*r >= 1.0 && r.is_finite()) {
                push(&format!("numerics.ratios[{k}]"), format!("must be finite and >= 1, got {r}"));
            }
        }
        if num.units == Units::Scaled && self.scenario.runs_full_dynamics() && self.model.mu == 0.0 {
            push("model.mu", "scaled dynamics need a nonzero spin moment".into());
        }
        if num.units == Units::Si && self.scenario == Scenario::AdiabaticSweep {
            push("numerics.units", "adiabatic_sweep varies the timescale ratio and needs scaled units".into());
        }
        errs
    }
}

/// Problem with one config field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    fn new(path: &str, message: String) -> Self {
        Self { path: path.to_string(), message }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConfigError {
    Io { path: PathBuf, message: String },
    Parse(String),
    Validation(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, message } => write!(f, "cannot read {}: {message}", path.display()),
            ConfigError::Parse(m) => write!(f, "PARSE_ERROR: {m}"),
            ConfigError::Validation(errs) => {
                write!(f, "VALIDATION_ERROR: {} problem(s)", errs.len())?;
                for e in errs {
                    write!(f, "\n  {}: {}", e.path, e.message)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut r = Reader::default();
    let scenario = match table.get("scenario") {
        None => {
            r.err("scenario", "missing; expected one of ".to_string() + &scenario_names());
            None
        }
        Some(Value::String(s)) => match Scenario::parse(s) {
            Some(sc) => Some(sc),
            None => {
                r.err("scenario", format!("unknown scenario {s:?}; valid names: {}", scenario_names()));
                None
            }
        },
        Some(v) => {
            r.err("scenario", format!("expected a string, got {}", v.type_str()));
            None
        }
    };
    let mut cfg = ScenarioConfig::defaults(scenario.unwrap_or(Scenario::ReproducePaper));
    r.check_keys("", &table, &["schema_version", "scenario", "model", "initial", "numerics", "output_dir"]);
    if let Some(v) = r.int(&table, "", "schema_version") {
        cfg.schema_version = v;
    }
    if let Some(v) = r.string(&table, "", "output_dir") {
        cfg.output_dir = Some(PathBuf::from(v));
    }

    if let Some(m) = r.section(&table, "", "model") {
        r.check_keys("model", m, &["mu0_mF", "mu", "d", "mass", "hbar", "trap_stiffness"]);
        let p = &mut cfg.model;
        r.float_into(m, "model", "mu0_mF", &mut p.mu0_mf);
        r.float_into(m, "model", "mu", &mut p.mu);
        r.float_into(m, "model", "d", &mut p.d);
        r.float_into(m, "model", "mass", &mut p.mass);
        r.float_into(m, "model", "hbar", &mut p.hbar);
        r.float_into(m, "model", "trap_stiffness", &mut p.trap_stiffness);
    }

    if let Some(i) = r.section(&table, "", "initial") {
        r.check_keys("initial", i, &["position", "velocity", "velocity_slow_units", "populations", "phases"]);
        let init = &mut cfg.initial;
        init.position = r.pair(i, "initial", "position");
        init.velocity = r.pair(i, "initial", "velocity");
        init.velocity_slow_units = r.pair(i, "initial", "velocity_slow_units");
        for (key, target) in [("populations", &mut init.populations), ("phases", &mut init.phases)] {
            let path = format!("initial.{key}");
            if let Some(t) = r.section(i, "initial", key) {
                r.check_keys(&path, t, &["plus", "minus"]);
                r.float_into(t, &path, "plus", &mut target.plus);
                r.float_into(t, &path, "minus", &mut target.minus);
            }
        }
    }

    if let Some(n) = r.section(&table, "", "numerics") {
        r.check_keys(
            "numerics",
            n,
            &[
                "units",
                "timescale_ratio",
                "duration_slow_periods",
                "output_samples",
                "plaquette_delta",
                "loop_radius",
                "loop_band",
                "grid_size",
                "grid_extent",
                "orbit_radius",
                "ratios",
            ],
        );
        let num = &mut cfg.numerics;
        if let Some(u) = r.string(n, "numerics", "units") {
            match u.as_str() {
                "scaled" => num.units = Units::Scaled,
                "si" => num.units = Units::Si,
                other => r.err("numerics.units", format!("expected \"scaled\" or \"si\", got {other:?}")),
            }
        }
        if let Some(b) = r.string(n, "numerics", "loop_band") {
            match b.as_str() {
                "plus" => num.loop_band = SpinBand::Plus,
                "minus" => num.loop_band = SpinBand::Minus,
                other => r.err("numerics.loop_band", format!("expected \"plus\" or \"minus\", got {other:?}")),
            }
        }
        r.float_into(n, "numerics", "timescale_ratio", &mut num.timescale_ratio);
        r.float_into(n, "numerics", "duration_slow_periods", &mut num.duration_slow_periods);
        for (key, target) in [("output_samples", &mut num.output_samples), ("grid_size", &mut num.grid_size)] {
            if let Some(v) = r.int(n, "numerics", key) {
                match usize::try_from(v) {
                    Ok(v) => *target = v,
                    Err(_) => r.err(&format!("numerics.{key}"), format!("must be non-negative, got {v}")),
                }
            }
        }
        num.plaquette_delta = r.float(n, "numerics", "plaquette_delta");
        num.loop_radius = r.float(n, "numerics", "loop_radius");
        num.grid_extent = r.float(n, "numerics", "grid_extent");
        num.orbit_radius = r.float(n, "numerics", "orbit_radius");
        if let Some(v) = n.get("ratios") {
            match v {
                Value::Array(items) => {
                    let mut out = Vec::new();
                    for (k, item) in items.iter().enumerate() {
                        match number(item) {
                            Some(x) => out.push(x),
                            None => r.err(&format!("numerics.ratios[{k}]"), format!("expected a number, got {}", item.type_str())),
                        }
                    }
                    num.ratios = out;
                }
                other => r.err("numerics.ratios", format!("expected an array, got {}", other.type_str())),
            }
        }
    }

    let mut errors = r.errors;
    if scenario.is_some() {
        errors.extend(cfg.issues());
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(errors))
    }
}

fn scenario_names() -> String {
    Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

#[derive(Default)]
struct Reader {
    errors: Vec<FieldError>,
}

impl Reader {
    fn err(&mut self, path: &str, message: String) {
        self.errors.push(FieldError::new(path, message));
    }

    fn check_keys(&mut self, prefix: &str, table: &Table, allowed: &[&str]) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(&join(prefix, key), format!("unknown field; expected one of {}", allowed.join(", ")));
            }
        }
    }

    fn section<'a>(&mut self, table: &'a Table, prefix: &str, key: &str) -> Option<&'a Table> {
        match table.get(key)? {
            Value::Table(t) => Some(t),
            other => {
                self.err(&join(prefix, key), format!("expected a table, got {}", other.type_str()));
                None
            }
        }
    }

    fn float(&mut self, table: &Table, prefix: &str, key: &str) -> Option<f64> {
        let v = table.get(key)?;
        let out = number(v);
        if out.is_none() {
            self.err(&join(prefix, key), format!("expected a number, got {}", v.type_str()));
        }
        out
    }

    fn float_into(&mut self, table: &Table, prefix: &str, key: &str, target: &mut f64) {
        if let Some(v) = self.float(table, prefix, key) {
            *target = v;
        }
    }

    fn int(&mut self, table: &Table, prefix: &str, key: &str) -> Option<i64> {
        match table.get(key)? {
            Value::Integer(i) => Some(*i),
            other => {
                self.err(&join(prefix, key), format!("expected an integer, got {}", other.type_str()));
                None
            }
        }
    }

    fn string(&mut self, table: &Table, prefix: &str, key: &str) -> Option<String> {
        match table.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.err(&join(prefix, key), format!("expected a string, got {}", other.type_str()));
                None
            }
        }
    }

    fn pair(&mut self, table: &Table, prefix: &str, key: &str) -> Option<[f64; 2]> {
        let v = table.get(key)?;
        if let Value::Array(items) = v {
            if let [a, b] = items.as_slice() {
                if let (Some(a), Some(b)) = (number(a), number(b)) {
                    return Some([a, b]);
                }
            }
        }
        self.err(&join(prefix, key), "expected an array of two numbers".into());
        None
    }
}

//! Scenario execution. [`execute`] is pure: it returns the checks and the
//! payload files in memory, so a run is reproducible byte for byte; writing
//! happens afterwards in [`run_scenario`] from a single thread.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::cli::config::{FieldError, Populations, Scenario, ScenarioConfig, Units};
use crate::cli::manifest::{CheckResult, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION};
use crate::effective::{frequency_split, integrate_effective, EffectiveState};
use crate::error::{Error, Result};
use crate::fulldyn::{default_step, HybridState, Integrator};
use crate::geometry::{berry_phase_circle, berry_phase_loop, curvature_extrapolated, LoopPath};
use crate::io;
use crate::model::{dipole_field, DipoleSpinModel, HybridModel, Scales, SpinBand, Vec2};
use crate::quantum::{from_action_angle, to_action_angle, wrap_angle, ActionAngleState, QuantumState};

/// Largest number of full-dynamics steps a run may request.
pub const MAX_FULL_DYNAMICS_STEPS: f64 = 1e9;

/// Reference values from the original parameter estimate.
pub mod reference {
    pub const FIELD_BZ: f64 = 3.2e-4;
    pub const FIELD_TOLERANCE: f64 = 0.02;
    pub const CURVATURE: f64 = 1.20e-22;
    pub const CURVATURE_TOLERANCE: f64 = 0.02;
    pub const DELTA_NU: f64 = 0.7e-8;
    pub const DELTA_NU_TOLERANCE: f64 = 0.10;
    pub const RADIUS: f64 = 1e-9;
}

pub const CURVATURE_AGREEMENT: f64 = 1e-6;
pub const LOOP_PHASE_TOLERANCE: f64 = 1e-4;
pub const REVERSAL_TOLERANCE: f64 = 1e-12;
pub const DELTA_NU_FORMULA_TOLERANCE: f64 = 1e-12;
pub const ORBIT_SPLIT_TOLERANCE: f64 = 1e-3;
pub const EQUAL_POPULATION_OFFSET: f64 = 1e-3;
pub const FULL_VS_EFFECTIVE_FINAL: f64 = 1e-2;
pub const ACTION_DRIFT_BOUND: f64 = 1e-3;
pub const EFFECTIVE_STEPS_PER_SLOW_PERIOD: f64 = 4000.0;

/// In-memory result of a scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioOutput {
    pub checks: Vec<CheckResult>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl ScenarioOutput {
    fn merge(&mut self, prefix: &str, other: ScenarioOutput) {
        self.checks.extend(other.checks.into_iter().map(|c| c.prefixed(prefix)));
        self.files.extend(other.files);
    }

    fn file(&mut self, name: String, contents: String) {
        self.files.push((name, contents.into_bytes()));
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.file(name.to_string(), text);
    }
}

/// Runs a group of checks; an error becomes one failed check instead of
/// aborting the scenario.
fn guarded(name: &str, f: impl FnOnce(&mut ScenarioOutput) -> Result<()>) -> ScenarioOutput {
    let mut out = ScenarioOutput::default();
    if let Err(e) = f(&mut out) {
        out.checks.push(CheckResult::failed(name, &e));
    }
    out
}

/// Problems that only show up once the model is built, such as a run
/// that would need more than [`MAX_FULL_DYNAMICS_STEPS`] steps.
pub fn preflight(cfg: &ScenarioConfig) -> Vec<FieldError> {
    let mut errs = Vec::new();
    if !cfg.scenario.runs_full_dynamics() {
        return errs;
    }
    let ratios: Vec<f64> = match (cfg.numerics.units, cfg.scenario) {
        (Units::Si, _) => vec![f64::NAN],
        (Units::Scaled, Scenario::SymmetryBreak) => vec![cfg.numerics.timescale_ratio],
        (Units::Scaled, _) => cfg.numerics.ratios.clone(),
    };
    for ratio in ratios {
        let estimate = DynamicsSetup::new(cfg, ratio).and_then(|s| {
            let q0 = s.initial_position(cfg, Vec2::ZERO);
            let dt = default_step(&s.model, q0)?;
            Ok(cfg.numerics.duration_slow_periods * s.model.slow_period() / dt)
        });
        match estimate {
            Ok(steps) if steps > MAX_FULL_DYNAMICS_STEPS => errs.push(FieldError {
                path: "numerics".into(),
                message: format!(
                    "full dynamics would need {steps:.2e} steps (limit {MAX_FULL_DYNAMICS_STEPS:.0e}); \
                     the fast precession is too far from the slow motion. Use units = \"scaled\" \
                     with a smaller timescale_ratio"
                ),
            }),
            Ok(_) => {}
            Err(e) => errs.push(FieldError { path: "model".into(), message: e.to_string() }),
        }
    }
    errs
}

pub fn execute(cfg: &ScenarioConfig) -> ScenarioOutput {
    match cfg.scenario {
        Scenario::ReproducePaper => reproduce_paper(cfg),
        Scenario::SymmetryBreak => symmetry_break(cfg),
        Scenario::FrequencySplit => frequency_split_scenario(cfg),
        Scenario::FullVsEffective => full_vs_effective(cfg),
        Scenario::BerryLoop => berry_loop(cfg),
        Scenario::CurvatureMap => curvature_map(cfg),
        Scenario::AdiabaticSweep => adiabatic_sweep(cfg),
    }
}

/// Executes `cfg`, writes its payload files into `out_dir` and the manifest
/// last.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> std::io::Result<RunManifest> {
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let output = execute(cfg);
    let mut outputs = Vec::with_capacity(output.files.len());
    for (name, contents) in &output.files {
        io::write_atomic(&out_dir.join(name), contents)?;
        outputs.push(name.clone());
    }
    let all_passed = output.checks.iter().all(|c| c.passed);
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scenario: cfg.scenario.name().to_string(),
        config: cfg.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        checks: output.checks,
        outputs,
        all_passed,
    };
    io::write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// A scaled model for the dynamics scenarios.
struct DynamicsSetup {
    model: DipoleSpinModel,
    scales: Scales,
}

impl DynamicsSetup {
    /// `ratio` is ignored for SI runs.
    fn new(cfg: &ScenarioConfig, ratio: f64) -> Result<Self> {
        let params = match cfg.numerics.units {
            Units::Scaled => cfg.model.with_timescale_ratio(ratio)?,
            Units::Si => cfg.model,
        };
        let (model, scales) = DipoleSpinModel::scaled(&params)?;
        Ok(Self { model, scales })
    }

    fn initial_position(&self, cfg: &ScenarioConfig, default: Vec2) -> Vec2 {
        cfg.initial
            .position
            .map_or(default, |p| Vec2::from(p) * (1.0 / self.scales.length))
    }

    fn initial_velocity(&self, cfg: &ScenarioConfig, default_slow_units: Vec2) -> Vec2 {
        let slow = self.model.slow_frequency() * self.model.d();
        match (cfg.initial.velocity, cfg.initial.velocity_slow_units) {
            (Some(v), _) => Vec2::from(v) * (1.0 / self.scales.velocity),
            (None, Some(v)) => Vec2::from(v) * slow,
            (None, None) => default_slow_units * slow,
        }
    }

    fn state(&self, q: Vec2, v: Vec2, populations: Populations, phases: Populations) -> Result<HybridState> {
        let psi = spin_state(&self.model, q, populations, phases)?;
        Ok(HybridState::new(psi, q, v * self.model.mass(), 0.0))
    }
}

/// Spin state with the given band populations and angle variables at `q`.
pub fn spin_state(model: &DipoleSpinModel, q: Vec2, populations: Populations, phases: Populations) -> Result<QuantumState> {
    let frame = model.eigenframe(q)?;
    let actions = model.actions_from_populations(populations.plus, populations.minus);
    let mut angles = vec![0.0; 2];
    angles[model.band_index(SpinBand::Plus)] = phases.plus;
    angles[model.band_index(SpinBand::Minus)] = phases.minus;
    from_action_angle(&ActionAngleState { actions, angles }, &frame, model.hbar())
}

fn sample_times(t_end: f64, n: usize) -> Vec<f64> {
    let mut times: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
    times[n] = t_end;
    times
}

fn swapped(p: Populations) -> Populations {
    Populations { plus: p.minus, minus: p.plus }
}

const EQUAL: Populations = Populations { plus: 0.5, minus: 0.5 };
const GROUND_MINUS: Populations = Populations { plus: 0.0, minus: 1.0 };

// ---------------------------------------------------------------- suites

type ScenarioFn = fn(&ScenarioConfig) -> ScenarioOutput;

fn reproduce_paper(cfg: &ScenarioConfig) -> ScenarioOutput {
    let parts: Vec<(&str, ScenarioFn)> = vec![
        ("paper_numbers", paper_numbers),
        ("berry_loop", berry_loop),
        ("curvature_map", curvature_map),
        ("frequency_split", frequency_split_scenario),
        ("symmetry_break", symmetry_break),
    ];
    let results: Vec<ScenarioOutput> = parts.par_iter().map(|(_, f)| f(cfg)).collect();
    let mut out = ScenarioOutput::default();
    for ((prefix, _), part) in parts.iter().zip(results) {
        out.merge(prefix, part);
    }
    out
}

#[derive(Serialize)]
struct PaperNumbers {
    radius: f64,
    field: [f64; 3],
    curvature_closed_form: f64,
    curvature_plaquette: f64,
    delta_nu: f64,
    nu_cw: f64,
    nu_ccw: f64,
}

/// Field, curvature and split at 1 nm with full population imbalance
/// (all of the spin in `|->`).
fn paper_numbers(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("paper_numbers", |out| {
        let p = cfg.model;
        let r = reference::RADIUS;
        let b = dipole_field(r, 0.0, &p);
        out.checks.push(CheckResult::relative("field_bz", b.bz.abs(), reference::FIELD_BZ, reference::FIELD_TOLERANCE));

        let model = DipoleSpinModel::from_params(&p)?;
        let actions = model.actions_from_populations(GROUND_MINUS.plus, GROUND_MINUS.minus);
        let q = Vec2::new(r, 0.0);
        let closed = model.curvature(q, &actions)?;
        let numeric = curvature_extrapolated(&model, q, &actions, cfg.plaquette_delta())?;
        out.checks.push(CheckResult::relative(
            "curvature_closed_form",
            closed.abs(),
            reference::CURVATURE,
            reference::CURVATURE_TOLERANCE,
        ));
        out.checks.push(CheckResult::relative(
            "curvature_plaquette",
            numeric.abs(),
            reference::CURVATURE,
            reference::CURVATURE_TOLERANCE,
        ));
        out.checks.push(CheckResult::relative("curvature_agreement", numeric, closed, CURVATURE_AGREEMENT));

        let split = frequency_split(&model, r, &actions)?;
        out.checks.push(CheckResult::relative(
            "delta_nu",
            split.delta_nu.abs(),
            reference::DELTA_NU,
            reference::DELTA_NU_TOLERANCE,
        ));
        out.json(
            "paper_numbers.json",
            &PaperNumbers {
                radius: r,
                field: [b.bx, b.by, b.bz],
                curvature_closed_form: closed,
                curvature_plaquette: numeric,
                delta_nu: split.delta_nu,
                nu_cw: split.nu_cw,
                nu_ccw: split.nu_ccw,
            },
        );
        Ok(())
    })
}

// ---------------------------------------------------------------- geometry

/// Solid angle of the cone swept by the field direction for a circle of
/// radius `r` (units of `d`) about the axis.
pub fn cone_solid_angle(r: f64) -> f64 {
    let a = 2.0 - r * r;
    let b = 3.0 * r;
    2.0 * PI * (1.0 - a / (a * a + b * b).sqrt())
}

/// `-Omega / 2` for the band aligned with the field, `+Omega / 2` for the
/// other, with the orientation of the axis field taken into account.
pub fn solid_angle_phase(model: &DipoleSpinModel, r_scaled: f64, band: SpinBand) -> f64 {
    let omega = cone_solid_angle(r_scaled);
    let aligned = matches!(band, SpinBand::Plus);
    let along_minus_z = model.field(Vec2::ZERO).bz < 0.0;
    let sign = if aligned == along_minus_z { -1.0 } else { 1.0 };
    wrap_angle(sign * 0.5 * omega)
}

fn berry_loop(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("berry_loop", |out| {
        let (model, scales) = DipoleSpinModel::scaled(&cfg.model)?;
        let r = cfg.loop_radius() / scales.length;
        let band_label = cfg.numerics.loop_band;
        let band = model.band_index(band_label);
        let phase = berry_phase_circle(&model, Vec2::ZERO, r, band)?;
        let prediction = solid_angle_phase(&model, r, band_label);
        let difference = wrap_angle(phase.phase - prediction);
        out.checks.push(CheckResult::absolute("phase_vs_solid_angle", difference, 0.0, LOOP_PHASE_TOLERANCE));

        let path = LoopPath::circle(Vec2::ZERO, r, phase.segments, band);
        let fwd = berry_phase_loop(&model, &path)?;
        let rev = berry_phase_loop(&model, &path.reversed())?;
        out.checks.push(CheckResult::absolute(
            "reversal_negates",
            wrap_angle(fwd.phase + rev.phase),
            0.0,
            REVERSAL_TOLERANCE,
        ));
        out.json(
            "berry_loop.json",
            &io::LoopReport {
                loop_radius: cfg.loop_radius(),
                band: match band_label {
                    SpinBand::Plus => "plus".into(),
                    SpinBand::Minus => "minus".into(),
                },
                phase: phase.phase,
                solid_angle_prediction: prediction,
                difference,
            },
        );
        Ok(())
    })
}

fn curvature_map(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("curvature_map", |out| {
        let (model, scales) = DipoleSpinModel::scaled(&cfg.model)?;
        let pops = cfg.initial.populations;
        let actions = model.actions_from_populations(pops.plus, pops.minus);
        let imbalance = pops.plus - pops.minus;
        let n = cfg.numerics.grid_size;
        let extent = cfg.grid_extent() / scales.length;
        let delta = cfg.plaquette_delta() / scales.length;
        let coord = |k: usize| -extent + 2.0 * extent * k as f64 / (n - 1) as f64;
        let points = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let q = Vec2::new(coord(k % n), coord(k / n));
                let numeric = curvature_extrapolated(&model, q, &actions, delta)?;
                let closed = model.curvature_closed_form(q, imbalance);
                Ok((q, numeric, closed, model.curvature_closed_form(q, 1.0).abs()))
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = points.iter().map(|p| p.3).fold(0.0, f64::max);
        let deviation = points.iter().map(|p| (p.1 - p.2).abs()).fold(0.0, f64::max) / scale;
        out.checks.push(CheckResult::below("max_deviation_from_closed_form", deviation, CURVATURE_AGREEMENT));
        let grid: Vec<(Vec2, f64)> = points.iter().map(|p| (p.0, p.1)).collect();
        out.file("curvature_map.csv".into(), io::curvature_grid_csv(&grid, &scales));
        Ok(())
    })
}

// ---------------------------------------------------------------- effective

#[derive(Serialize)]
struct SplitFile {
    si: crate::effective::FrequencySplitReport,
    predicted_delta_nu: f64,
    orbit_simulation: Option<OrbitSimulation>,
}

#[derive(Serialize, Clone, Copy)]
struct OrbitSimulation {
    timescale_ratio: f64,
    radius_scaled: f64,
    omega_cw_simulated: f64,
    omega_ccw_simulated: f64,
    delta_nu_simulated: f64,
    delta_nu_predicted: f64,
}

/// Measured angular velocity of a free effective orbit started on the
/// force-balance circle with angular velocity `omega`.
pub fn simulate_circular_orbit(model: &DipoleSpinModel, r: f64, omega: f64, actions: &[f64], revolutions: f64) -> Result<f64> {
    let s = EffectiveState::new(Vec2::new(r, 0.0), Vec2::new(0.0, omega * r), actions.to_vec(), 0.0);
    let period = 2.0 * PI / omega.abs();
    let t_end = revolutions * period;
    let n = (revolutions * 64.0).ceil() as usize;
    let times = sample_times(t_end, n);
    let traj = integrate_effective(model, &s, t_end, &times, period / 4000.0)?;
    let mut angle = 0.0;
    let mut prev = 0.0f64;
    for st in &traj.samples[1..] {
        let a = st.q.y.atan2(st.q.x);
        angle += wrap_angle(a - prev);
        prev = a;
    }
    Ok(angle / t_end)
}

fn frequency_split_scenario(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("frequency_split", |out| {
        let pops = cfg.initial.populations;
        let model = DipoleSpinModel::from_params(&cfg.model)?;
        let actions = model.actions_from_populations(pops.plus, pops.minus);
        let r = cfg.orbit_radius();
        let split = frequency_split(&model, r, &actions)?;
        let predicted = split.predicted_delta_nu(model.mass());
        let formula = CheckResult::absolute(
            "delta_nu_consistency",
            split.nu_cw - split.nu_ccw,
            split.delta_nu,
            DELTA_NU_FORMULA_TOLERANCE * split.nu_ccw,
        );
        out.checks.push(formula);

        let sim = guarded_orbit(cfg, pops, r, out);
        out.json("frequency_split.json", &SplitFile { si: split, predicted_delta_nu: predicted, orbit_simulation: sim });
        Ok(())
    })
}

/// Orbit-simulation oracle in scaled units at the configured timescale ratio.
fn guarded_orbit(cfg: &ScenarioConfig, pops: Populations, r_si: f64, out: &mut ScenarioOutput) -> Option<OrbitSimulation> {
    let run = || -> Result<OrbitSimulation> {
        let params = cfg.model.with_timescale_ratio(cfg.numerics.timescale_ratio)?;
        let (model, scales) = DipoleSpinModel::scaled(&params)?;
        let actions = model.actions_from_populations(pops.plus, pops.minus);
        let r = r_si / scales.length;
        let (cw, ccw, b) = crate::effective::circular_orbit_roots(&model, r, &actions)?;
        let w_cw = simulate_circular_orbit(&model, r, cw, &actions, 4.0)?;
        let w_ccw = simulate_circular_orbit(&model, r, ccw, &actions, 4.0)?;
        Ok(OrbitSimulation {
            timescale_ratio: cfg.numerics.timescale_ratio,
            radius_scaled: r,
            omega_cw_simulated: w_cw,
            omega_ccw_simulated: w_ccw,
            delta_nu_simulated: (-w_cw - w_ccw) / (2.0 * PI),
            delta_nu_predicted: b / (2.0 * PI * model.mass()),
        })
    };
    match run() {
        Ok(sim) => {
            let check = if sim.delta_nu_predicted == 0.0 {
                let scale = sim.omega_ccw_simulated / (2.0 * PI);
                CheckResult::absolute("orbit_simulation", sim.delta_nu_simulated, 0.0, ORBIT_SPLIT_TOLERANCE * scale * 1e-3)
            } else {
                CheckResult::relative("orbit_simulation", sim.delta_nu_simulated, sim.delta_nu_predicted, ORBIT_SPLIT_TOLERANCE)
            };
            out.checks.push(check);
            Some(sim)
        }
        Err(e) => {
            out.checks.push(CheckResult::failed("orbit_simulation", &e));
            None
        }
    }
}

// ---------------------------------------------------------------- dynamics

struct FullRun {
    times: Vec<f64>,
    samples: Vec<HybridState>,
    csv: String,
    max_action_drift: f64,
    max_energy_drift: f64,
    max_norm_drift: f64,
}

fn run_full(setup: &DynamicsSetup, initial: &HybridState, t_end: f64, times: &[f64]) -> Result<FullRun> {
    let model = &setup.model;
    let mut integ = Integrator::for_model(model, initial.q)?;
    let frame0 = model.eigenframe(initial.q)?;
    let actions0 = to_action_angle(&initial.psi, &frame0, model.hbar())?.actions;
    let e0 = crate::fulldyn::total_energy(model, initial);
    let mut max_action_drift: f64 = 0.0;
    let mut max_energy_drift: f64 = 0.0;
    let mut max_norm_drift: f64 = 0.0;
    let traj = integ.run(model, initial, t_end, times, |s| {
        if let Ok(aa) = model.eigenframe(s.q).and_then(|f| to_action_angle(&s.psi, &f, model.hbar())) {
            for (a, b) in aa.actions.iter().zip(&actions0) {
                max_action_drift = max_action_drift.max((a - b).abs() / model.hbar());
            }
        }
        let e = crate::fulldyn::total_energy(model, s);
        max_energy_drift = max_energy_drift.max(((e - e0) / e0).abs());
        max_norm_drift = max_norm_drift.max((s.psi.norm_sqr() - 1.0).abs());
    })?;
    Ok(FullRun {
        times: times.to_vec(),
        csv: io::trajectory_csv(&traj, &setup.scales),
        samples: traj.samples,
        max_action_drift,
        max_energy_drift,
        max_norm_drift,
    })
}

fn lateral(v0: Vec2, q0: Vec2, q: Vec2) -> f64 {
    v0.cross(q - q0) / v0.norm()
}

fn symmetry_break(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("symmetry_break", |out| {
        let setup = DynamicsSetup::new(cfg, cfg.numerics.timescale_ratio)?;
        let model = &setup.model;
        let q0 = setup.initial_position(cfg, Vec2::ZERO);
        let v0 = setup.initial_velocity(cfg, Vec2::new(0.3, 0.0));
        if v0 == Vec2::ZERO {
            return Err(Error::InvalidArgument("symmetry_break needs a nonzero initial velocity".into()));
        }
        let t_end = cfg.numerics.duration_slow_periods * model.slow_period();
        let quarter = 0.25 * model.slow_period();
        let mut times = sample_times(t_end, cfg.numerics.output_samples);
        if quarter < t_end && !times.contains(&quarter) {
            times.push(quarter);
            times.sort_by(f64::total_cmp);
        }
        let pops = cfg.initial.populations;
        let phases = cfg.initial.phases;
        let cases = [("configured", pops), ("swapped", swapped(pops)), ("equal", EQUAL)];
        let runs: Vec<Result<FullRun>> = cases
            .par_iter()
            .map(|(_, p)| run_full(&setup, &setup.state(q0, v0, *p, phases)?, t_end, &times))
            .collect();
        let mut lateral_at_quarter = Vec::new();
        for ((label, _), run) in cases.iter().zip(runs) {
            let run = run?;
            let k = run.times.iter().position(|&t| t == quarter.min(t_end)).unwrap_or(run.times.len() - 1);
            lateral_at_quarter.push(lateral(v0, q0, run.samples[k].q));
            if *label == "equal" {
                let lat: Vec<f64> = run.samples.iter().map(|s| lateral(v0, q0, s.q)).collect();
                let mean = lat.iter().sum::<f64>() / lat.len() as f64;
                let excursion = run
                    .samples
                    .iter()
                    .map(|s| (s.q - q0).dot(v0) / v0.norm())
                    .fold(0.0f64, |m, x| m.max(x.abs()));
                out.checks.push(CheckResult::below(
                    "equal_population_mean_offset",
                    mean.abs() / excursion,
                    EQUAL_POPULATION_OFFSET,
                ));
            }
            out.file(format!("symmetry_break_{label}.csv"), run.csv);
        }
        let imbalance = pops.plus - pops.minus;
        if imbalance != 0.0 {
            let curvature = model.curvature_closed_form(q0, imbalance);
            // v x (B v_y, -B v_x) = -B |v|^2
            let predicted = -curvature.signum();
            let measured = lateral_at_quarter[0];
            out.checks.push(CheckResult::flag(
                "deflection_sign",
                measured.signum() == predicted && measured != 0.0,
                format!("lateral offset {measured:e} at a quarter slow period, predicted sign {predicted}"),
            ));
            let flipped = lateral_at_quarter[1];
            out.checks.push(CheckResult::flag(
                "deflection_flips_under_swap",
                flipped.signum() == -measured.signum() && flipped != 0.0,
                format!("swapped lateral offset {flipped:e}"),
            ));
        }
        Ok(())
    })
}

struct Comparison {
    ratio: f64,
    discrepancy: f64,
    action_drift: f64,
    full_csv: String,
    effective_csv: String,
}

fn compare_at_ratio(cfg: &ScenarioConfig, ratio: f64) -> Result<Comparison> {
    let setup = DynamicsSetup::new(cfg, ratio)?;
    let model = &setup.model;
    let q0 = setup.initial_position(cfg, Vec2::new(0.3, 0.0));
    let v0 = setup.initial_velocity(cfg, Vec2::new(0.0, 0.3));
    let initial = setup.state(q0, v0, cfg.initial.populations, cfg.initial.phases)?;
    let period = model.slow_period();
    let t_end = cfg.numerics.duration_slow_periods * period;
    let times = sample_times(t_end, cfg.numerics.output_samples);
    let full = run_full(&setup, &initial, t_end, &times)?;
    let actions = to_action_angle(&initial.psi, &model.eigenframe(q0)?, model.hbar())?.actions;
    let eff = integrate_effective(
        model,
        &EffectiveState::new(q0, v0, actions, 0.0),
        t_end,
        &times,
        period / EFFECTIVE_STEPS_PER_SLOW_PERIOD,
    )?;
    let size = eff.samples.iter().map(|s| s.q.norm()).fold(0.0, f64::max);
    let end_full = full.samples.last().unwrap().q;
    let end_eff = eff.samples.last().unwrap().q;
    Ok(Comparison {
        ratio,
        discrepancy: (end_full - end_eff).norm() / size,
        action_drift: full.max_action_drift,
        full_csv: full.csv,
        effective_csv: io::effective_csv(&eff, model.mass(), &setup.scales),
    })
}

fn ratio_label(r: f64) -> String {
    if r.fract() == 0.0 && r < 1e15 {
        format!("{}", r as u64)
    } else {
        format!("{r:e}")
    }
}

fn full_vs_effective(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("full_vs_effective", |out| {
        let ratios = match cfg.numerics.units {
            Units::Scaled => cfg.numerics.ratios.clone(),
            Units::Si => vec![DipoleSpinModel::from_params(&cfg.model)?.timescale_ratio()],
        };
        let results: Vec<Result<Comparison>> = ratios.par_iter().map(|&r| compare_at_ratio(cfg, r)).collect();
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for c in &results {
            out.file(format!("full_R{}.csv", ratio_label(c.ratio)), c.full_csv.clone());
            out.file(format!("effective_R{}.csv", ratio_label(c.ratio)), c.effective_csv.clone());
            rows.push(vec![c.ratio, c.discrepancy, c.action_drift]);
            out.checks.push(CheckResult {
                detail: format!("position discrepancy after the run at ratio {}", c.ratio),
                ..CheckResult::below(&format!("discrepancy_R{}", ratio_label(c.ratio)), c.discrepancy, f64::INFINITY)
            });
        }
        let mut sorted: Vec<&Comparison> = results.iter().collect();
        sorted.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
        if sorted.len() > 1 {
            let monotone = sorted.windows(2).all(|w| w[1].discrepancy < w[0].discrepancy);
            out.checks.push(CheckResult::flag(
                "discrepancy_decreasing",
                monotone,
                sorted.iter().map(|c| format!("{}: {:.3e}", c.ratio, c.discrepancy)).collect::<Vec<_>>().join(", "),
            ));
        }
        if let Some(last) = sorted.last().filter(|c| c.ratio >= 1e4) {
            out.checks.push(CheckResult::below("discrepancy_at_largest_ratio", last.discrepancy, FULL_VS_EFFECTIVE_FINAL));
        }
        out.file(
            "full_vs_effective.csv".into(),
            io::table_csv(&["timescale_ratio", "discrepancy", "max_action_drift_hbar"], &rows),
        );
        Ok(())
    })
}

fn adiabatic_sweep(cfg: &ScenarioConfig) -> ScenarioOutput {
    guarded("adiabatic_sweep", |out| {
        let results: Vec<Result<(f64, FullRun)>> = cfg
            .numerics
            .ratios
            .par_iter()
            .map(|&ratio| {
                let setup = DynamicsSetup::new(cfg, ratio)?;
                let q0 = setup.initial_position(cfg, Vec2::new(0.3, 0.0));
                let v0 = setup.initial_velocity(cfg, Vec2::new(0.0, 0.3));
                let initial = setup.state(q0, v0, cfg.initial.populations, cfg.initial.phases)?;
                let t_end = cfg.numerics.duration_slow_periods * setup.model.slow_period();
                let times = sample_times(t_end, cfg.numerics.output_samples);
                Ok((ratio, run_full(&setup, &initial, t_end, &times)?))
            })
            .collect();
        let mut rows = Vec::new();
        for r in results {
            let (ratio, run) = r?;
            rows.push(vec![ratio, run.max_action_drift, run.max_energy_drift, run.max_norm_drift]);
            if ratio >= 1e3 {
                out.checks.push(CheckResult::below(
                    &format!("action_drift_R{}", ratio_label(ratio)),
                    run.max_action_drift,
                    ACTION_DRIFT_BOUND,
                ));
            }
        }
        out.file(
            "adiabatic_sweep.csv".into(),
            io::table_csv(&["timescale_ratio", "max_action_drift_hbar", "max_energy_drift_rel", "max_norm_drift"], &rows),
        );
        Ok(())
    })
}

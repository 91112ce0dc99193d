//! Python bindings. The extension module imports as `berryforce`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use berryforce::cli::{self, ScenarioConfig};
use berryforce::effective::{self, EffectiveState};
use berryforce::fulldyn::{self, HybridState};
use berryforce::geometry;
use berryforce::model::{self, HybridModel};
use berryforce::{C64, Vec2};

create_exception!(berryforce, BerryforceError, PyException, "Error raised by the simulation core.");

fn err(e: berryforce::Error) -> PyErr {
    BerryforceError::new_err(e.to_string())
}

fn band_from(name: &str) -> PyResult<model::SpinBand> {
    match name {
        "plus" => Ok(model::SpinBand::Plus),
        "minus" => Ok(model::SpinBand::Minus),
        other => Err(PyValueError::new_err(format!("band must be 'plus' or 'minus', got {other:?}"))),
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Physical parameters in SI units. Defaults to the reference parameter set.
#[pyclass(name = "ModelParams", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: model::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (mu0_mF=None, mu=None, d=None, mass=None, hbar=None, trap_stiffness=None))]
    #[allow(non_snake_case)]
    fn new(
        mu0_mF: Option<f64>,
        mu: Option<f64>,
        d: Option<f64>,
        mass: Option<f64>,
        hbar: Option<f64>,
        trap_stiffness: Option<f64>,
    ) -> PyResult<Self> {
        let base = model::ModelParams::paper();
        let inner = model::ModelParams {
            mu0_mf: mu0_mF.unwrap_or(base.mu0_mf),
            mu: mu.unwrap_or(base.mu),
            d: d.unwrap_or(base.d),
            mass: mass.unwrap_or(base.mass),
            hbar: hbar.unwrap_or(base.hbar),
            trap_stiffness: trap_stiffness.unwrap_or(base.trap_stiffness),
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter(mu0_mF)]
    fn mu0_mf(&self) -> f64 {
        self.inner.mu0_mf
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }
    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }
    #[getter]
    fn hbar(&self) -> f64 {
        self.inner.hbar
    }
    #[getter]
    fn trap_stiffness(&self) -> f64 {
        self.inner.trap_stiffness
    }

    /// Copy with the mass set so that omega_fast(0) / omega_slow = ratio.
    fn with_timescale_ratio(&self, ratio: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_timescale_ratio(ratio).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(mu0_mF={:e}, mu={:e}, d={:e}, mass={:e}, hbar={:e}, trap_stiffness={:e})",
            p.mu0_mf, p.mu, p.d, p.mass, p.hbar, p.trap_stiffness
        )
    }
}

/// Dipole-spin model. With `scaled=True` (default) all inputs and outputs are
/// in the scaled units given by `scales()`; otherwise SI.
#[pyclass(name = "DipoleSpinModel", skip_from_py_object)]
struct PyModel {
    inner: model::DipoleSpinModel,
    scales: model::Scales,
}

fn state_dict<'py>(py: Python<'py>, columns: &[(&str, Vec<f64>)]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in columns {
        d.set_item(*k, v.clone())?;
    }
    Ok(d)
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (params=None, scaled=true))]
    fn new(params: Option<PyRef<'_, PyModelParams>>, scaled: bool) -> PyResult<Self> {
        let p = params.map_or_else(model::ModelParams::paper, |p| p.inner);
        if scaled {
            let (inner, scales) = model::DipoleSpinModel::scaled(&p).map_err(err)?;
            Ok(Self { inner, scales })
        } else {
            Ok(Self { inner: model::DipoleSpinModel::from_params(&p).map_err(err)?, scales: model::Scales::identity() })
        }
    }

    /// Unit of each quantity in SI.
    fn scales<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &serde_json::to_string(&self.scales).expect("scales serialize"))
    }

    fn field(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let b = self.inner.field(Vec2::new(x, y));
        (b.bx, b.by, b.bz)
    }

    fn hamiltonian(&self, x: f64, y: f64) -> Vec<Vec<C64>> {
        let h = self.inner.hamiltonian(Vec2::new(x, y));
        (0..2).map(|i| (0..2).map(|j| h.get(i, j)).collect()).collect()
    }

    /// `(energies, states)` in ascending order, in the model's smooth gauge.
    fn eigensystem(&self, x: f64, y: f64) -> PyResult<(Vec<f64>, Vec<Vec<C64>>)> {
        let f = self.inner.eigenframe(Vec2::new(x, y)).map_err(err)?;
        Ok((f.energies, f.states))
    }

    /// Index in ascending-energy order of the 'plus' or 'minus' band.
    fn band_index(&self, band: &str) -> PyResult<usize> {
        Ok(self.inner.band_index(band_from(band)?))
    }

    fn actions(&self, plus: f64, minus: f64) -> Vec<f64> {
        self.inner.actions_from_populations(plus, minus)
    }

    /// Closed-form curvature for the given populations.
    fn curvature(&self, x: f64, y: f64, plus: f64, minus: f64) -> f64 {
        self.inner.curvature_closed_form(Vec2::new(x, y), plus - minus)
    }

    /// Plaquette curvature with Richardson extrapolation.
    #[pyo3(signature = (x, y, plus, minus, delta=None))]
    fn curvature_numeric(&self, x: f64, y: f64, plus: f64, minus: f64, delta: Option<f64>) -> PyResult<f64> {
        let delta = delta.unwrap_or(geometry::DEFAULT_PLAQUETTE * self.inner.d());
        let actions = self.inner.actions_from_populations(plus, minus);
        geometry::curvature_extrapolated(&self.inner, Vec2::new(x, y), &actions, delta).map_err(err)
    }

    fn berry_connection(&self, x: f64, y: f64, band: &str) -> PyResult<(f64, f64)> {
        let n = self.inner.band_index(band_from(band)?);
        let h = geometry::DEFAULT_CONNECTION_STEP * self.inner.d();
        let a = geometry::berry_connection(&self.inner, Vec2::new(x, y), n, h).map_err(err)?;
        Ok((a.value.x, a.value.y))
    }

    /// Loop phase around a counter-clockwise circle about the axis.
    fn berry_phase_circle<'py>(&self, py: Python<'py>, radius: f64, band: &str) -> PyResult<Bound<'py, PyDict>> {
        let n = self.inner.band_index(band_from(band)?);
        let p = geometry::berry_phase_circle(&self.inner, Vec2::ZERO, radius, n).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("phase", p.phase)?;
        d.set_item("unwrapped", p.unwrapped)?;
        d.set_item("winding", p.winding)?;
        d.set_item("segments", p.segments)?;
        Ok(d)
    }

    fn frequency_split<'py>(&self, py: Python<'py>, radius: f64, plus: f64, minus: f64) -> PyResult<Bound<'py, PyAny>> {
        let actions = self.inner.actions_from_populations(plus, minus);
        let rep = effective::frequency_split(&self.inner, radius, &actions).map_err(err)?;
        json_to_py(py, &serde_json::to_string(&rep).expect("report serializes"))
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass()
    }
    #[getter]
    fn hbar(&self) -> f64 {
        self.inner.hbar()
    }
    fn slow_period(&self) -> f64 {
        self.inner.slow_period()
    }
    fn fast_frequency(&self, x: f64, y: f64) -> f64 {
        self.inner.fast_frequency(Vec2::new(x, y))
    }
    fn timescale_ratio(&self) -> f64 {
        self.inner.timescale_ratio()
    }

    /// Coupled spin-particle dynamics from a spin with the given band
    /// populations (zero phases). Returns columns sampled at `samples + 1`
    /// equally spaced times.
    #[pyo3(signature = (position, velocity, plus, minus, t_final, samples=100))]
    #[allow(clippy::too_many_arguments)]
    fn integrate_full<'py>(
        &self,
        py: Python<'py>,
        position: (f64, f64),
        velocity: (f64, f64),
        plus: f64,
        minus: f64,
        t_final: f64,
        samples: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let q = Vec2::new(position.0, position.1);
        let v = Vec2::new(velocity.0, velocity.1);
        let pops = cli::config::Populations { plus, minus };
        let zero = cli::config::Populations { plus: 0.0, minus: 0.0 };
        let m = self.inner;
        let traj = py
            .detach(|| {
                let psi = cli::scenario::spin_state(&m, q, pops, zero)?;
                let s = HybridState::new(psi, q, v * m.mass(), 0.0);
                fulldyn::integrate(&m, &s, t_final, &times(t_final, samples))
            })
            .map_err(err)?;
        let col = |f: &dyn Fn(&HybridState) -> f64| traj.samples.iter().map(f).collect::<Vec<_>>();
        let d = state_dict(
            py,
            &[
                ("t", col(&|s| s.t)),
                ("x", col(&|s| s.q.x)),
                ("y", col(&|s| s.q.y)),
                ("px", col(&|s| s.p.x)),
                ("py", col(&|s| s.p.y)),
                ("energy", traj.diagnostics.iter().map(|d| d.energy).collect()),
                ("norm", traj.diagnostics.iter().map(|d| d.norm).collect()),
            ],
        )?;
        d.set_item("renormalizations", traj.stats.renormalizations)?;
        d.set_item("steps", traj.stats.steps)?;
        Ok(d)
    }

    /// Adiabatic effective dynamics with frozen populations.
    #[pyo3(signature = (position, velocity, plus, minus, t_final, samples=100, dt=None))]
    #[allow(clippy::too_many_arguments)]
    fn integrate_effective<'py>(
        &self,
        py: Python<'py>,
        position: (f64, f64),
        velocity: (f64, f64),
        plus: f64,
        minus: f64,
        t_final: f64,
        samples: usize,
        dt: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let m = self.inner;
        let dt = dt.unwrap_or(m.slow_period() / 4000.0);
        let s = EffectiveState::new(
            Vec2::new(position.0, position.1),
            Vec2::new(velocity.0, velocity.1),
            m.actions_from_populations(plus, minus),
            0.0,
        );
        let traj = py
            .detach(|| effective::integrate_effective(&m, &s, t_final, &times(t_final, samples), dt))
            .map_err(err)?;
        let col = |f: &dyn Fn(&EffectiveState) -> f64| traj.samples.iter().map(f).collect::<Vec<_>>();
        state_dict(
            py,
            &[
                ("t", col(&|s| s.t)),
                ("x", col(&|s| s.q.x)),
                ("y", col(&|s| s.q.y)),
                ("vx", col(&|s| s.v.x)),
                ("vy", col(&|s| s.v.y)),
                ("energy", traj.energies.clone()),
            ],
        )
    }
}

fn times(t_final: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(1);
    let mut t: Vec<f64> = (0..=n).map(|k| t_final * k as f64 / n as f64).collect();
    t[n] = t_final;
    t
}

/// Dipole field (T) at the spin for the particle at `(x, y)` metres.
#[pyfunction]
fn dipole_field(x: f64, y: f64, params: PyRef<'_, PyModelParams>) -> (f64, f64, f64) {
    let b = model::dipole_field(x, y, &params.inner);
    (b.bx, b.by, b.bz)
}

/// Spin Hamiltonian `-mu sigma . B` as a 2x2 nested list.
#[pyfunction]
fn spin_hamiltonian(bx: f64, by: f64, bz: f64, mu: f64) -> Vec<Vec<C64>> {
    let h = model::spin_hamiltonian(&model::FieldVector { bx, by, bz }, mu);
    (0..2).map(|i| (0..2).map(|j| h.get(i, j)).collect()).collect()
}

/// Eigen-decomposition of a Hermitian matrix given as nested lists;
/// eigenvectors are phase-fixed on their largest component.
#[pyfunction]
fn eigensystem(matrix: Vec<Vec<C64>>) -> PyResult<(Vec<f64>, Vec<Vec<C64>>)> {
    let n = matrix.len();
    if matrix.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let h = model::HermitianOperator::new(n, matrix.into_iter().flatten().collect()).map_err(err)?;
    let f = model::eigensystem(&h, &model::GaugeAnchor::LargestComponent).map_err(err)?;
    Ok((f.energies, f.states))
}

/// Loads and validates a scenario config; returns it as a dict.
#[pyfunction]
fn load_config<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = cli::load_config(&path).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &serde_json::to_string(&cfg).expect("config serializes"))
}

/// Runs a scenario config (path) or the reproduction suite (None), writing
/// artifacts into `out_dir`. Returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (config, out_dir))]
fn run_scenario<'py>(py: Python<'py>, config: Option<PathBuf>, out_dir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let cfg = match config {
        Some(p) => cli::load_config(&p).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => ScenarioConfig::defaults(cli::Scenario::ReproducePaper),
    };
    let pre = cli::preflight(&cfg);
    if !pre.is_empty() {
        return Err(PyValueError::new_err(cli::ConfigError::Validation(pre).to_string()));
    }
    let manifest = py
        .detach(|| cli::run_scenario(&cfg, &out_dir))
        .map_err(|e| PyException::new_err(e.to_string()))?;
    json_to_py(py, &serde_json::to_string(&manifest).expect("manifest serializes"))
}

#[pymodule]
#[pyo3(name = "berryforce")]
fn berryforce_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("BerryforceError", m.py().get_type::<BerryforceError>())?;
    m.add("BOHR_MAGNETON", model::BOHR_MAGNETON)?;
    m.add("HBAR", model::HBAR_SI)?;
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(dipole_field, m)?)?;
    m.add_function(wrap_pyfunction!(spin_hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(eigensystem, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}

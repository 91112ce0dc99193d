//! Exact coupled integration: Schrödinger evolution of the fast state driven
//! by the particle position, Newtonian motion of the particle driven by the
//! mean-field force. No adiabatic approximation is made.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::model::{HybridModel, Vec2};
use crate::ode::{landing_times, Rk4};
use crate::quantum::{to_action_angle, QuantumState};

/// Fixed steps per period of the fastest level-spacing oscillation.
pub const STEPS_PER_FAST_PERIOD: f64 = 64.0;
/// Norm drift above which the state is renormalized after a step.
pub const RENORM_THRESHOLD: f64 = 1e-12;
/// Largest accepted local error estimate, relative to the state scale.
pub const LOCAL_ERROR_TOLERANCE: f64 = 1e-6;

/// Full phase point of the hybrid system.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub psi: QuantumState,
    pub q: Vec2,
    pub p: Vec2,
    pub t: f64,
}

impl HybridState {
    pub fn new(psi: QuantumState, q: Vec2, p: Vec2, t: f64) -> Self {
        Self { psi, q, p, t }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite()
            && self.p.is_finite()
            && self.t.is_finite()
            && self.psi.amps().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Per-sample conservation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDiagnostics {
    pub energy: f64,
    pub norm: f64,
    /// Band actions; `None` where the eigenbasis is undefined.
    pub actions: Option<Vec<f64>>,
}

/// Running statistics of an integrator.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub steps: u64,
    pub renormalizations: u64,
    /// Largest `| |psi|^2 - 1 |` seen right after a step, before any
    /// renormalization.
    pub max_raw_norm_drift: f64,
    pub max_error_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<HybridState>,
    pub diagnostics: Vec<SampleDiagnostics>,
    pub stats: StepStats,
}

/// `<psi|H1(q)|psi> + p^2 / 2M + V2(q)`.
pub fn total_energy<M: HybridModel + ?Sized>(model: &M, s: &HybridState) -> f64 {
    let psi = s.psi.amps();
    let mut h_psi = vec![C64::new(0.0, 0.0); psi.len()];
    model.apply_hamiltonian(s.q, psi, &mut h_psi);
    let quantum: f64 = psi.iter().zip(&h_psi).map(|(a, b)| (a.conj() * b).re).sum();
    quantum + s.p.norm_sqr() / (2.0 * model.mass()) + model.potential(s.q)
}

/// Diagnostics for a single state.
pub fn diagnose<M: HybridModel + ?Sized>(model: &M, s: &HybridState) -> SampleDiagnostics {
    let actions = model
        .eigenframe(s.q)
        .and_then(|f| to_action_angle(&s.psi, &f, model.hbar()))
        .ok()
        .map(|aa| aa.actions);
    SampleDiagnostics {
        energy: total_energy(model, s),
        norm: s.psi.norm_sqr(),
        actions,
    }
}

/// Reference step: 1/64 of the fastest level-spacing period at `q0`.
pub fn default_step<M: HybridModel + ?Sized>(model: &M, q0: Vec2) -> Result<f64> {
    let frame = model.eigenframe(q0)?;
    let spread = frame.energies[frame.dim() - 1] - frame.energies[0];
    let omega_fast = spread / model.hbar();
    Ok(2.0 * PI / omega_fast / STEPS_PER_FAST_PERIOD)
}

/// Fixed-step RK4 on the joint real vector (Re psi, Im psi, q, p), with a
/// step-doubling local error estimate on every step.
pub struct Integrator {
    pub dt: f64,
    pub renorm_threshold: f64,
    pub error_tolerance: f64,
    stats: StepStats,
    rk: Rk4,
    y: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    twice: Vec<f64>,
    psi: Vec<C64>,
    h_psi: Vec<C64>,
    momentum_scale: Option<f64>,
}

impl Integrator {
    pub fn new(dim: usize, dt: f64) -> Self {
        let n = 2 * dim + 4;
        Self {
            dt,
            renorm_threshold: RENORM_THRESHOLD,
            error_tolerance: LOCAL_ERROR_TOLERANCE,
            stats: StepStats::default(),
            rk: Rk4::new(n),
            y: vec![0.0; n],
            full: vec![0.0; n],
            half: vec![0.0; n],
            twice: vec![0.0; n],
            psi: vec![C64::new(0.0, 0.0); dim],
            h_psi: vec![C64::new(0.0, 0.0); dim],
            momentum_scale: None,
        }
    }

    /// Integrator at the reference step for a trajectory starting at `q0`.
    pub fn for_model<M: HybridModel + ?Sized>(model: &M, q0: Vec2) -> Result<Self> {
        Ok(Self::new(model.dim(), default_step(model, q0)?))
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Advance one step of `self.dt`.
    pub fn step<M: HybridModel + ?Sized>(&mut self, model: &M, s: &HybridState) -> Result<HybridState> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        self.step_by(model, s, self.dt)
    }

    /// Advance by `h`; negative `h` integrates backward in time.
    pub fn step_by<M: HybridModel + ?Sized>(
        &mut self,
        model: &M,
        s: &HybridState,
        h: f64,
    ) -> Result<HybridState> {
        let n = model.dim();
        if s.psi.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.psi.dim() });
        }
        if !(h != 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be finite and nonzero, got {h}")));
        }
        pack(s, &mut self.y);
        let hbar = model.hbar();
        let mass = model.mass();
        let psi = &mut self.psi;
        let h_psi = &mut self.h_psi;
        let mut deriv = |y: &[f64], dy: &mut [f64]| {
            for j in 0..n {
                psi[j] = C64::new(y[2 * j], y[2 * j + 1]);
            }
            let q = Vec2::new(y[2 * n], y[2 * n + 1]);
            let p = Vec2::new(y[2 * n + 2], y[2 * n + 3]);
            model.apply_hamiltonian(q, psi, h_psi);
            for j in 0..n {
                // -(i/hbar) H psi
                dy[2 * j] = h_psi[j].im / hbar;
                dy[2 * j + 1] = -h_psi[j].re / hbar;
            }
            let force = -model.expectation_gradient(q, psi) - model.potential_gradient(q);
            dy[2 * n] = p.x / mass;
            dy[2 * n + 1] = p.y / mass;
            dy[2 * n + 2] = force.x;
            dy[2 * n + 3] = force.y;
        };

        self.rk.step(&mut deriv, &self.y, h, &mut self.full);
        self.rk.step(&mut deriv, &self.y, 0.5 * h, &mut self.half);
        self.rk.step(&mut deriv, &self.half, 0.5 * h, &mut self.twice);

        let t_new = s.t + h;
        if self.full.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_new });
        }

        let p_scale = *self.momentum_scale.get_or_insert_with(|| {
            (mass * model.hamiltonian(s.q).frobenius_norm()).sqrt()
        });
        let estimate = error_estimate(&self.full, &self.twice, n, model.length_scale(), p_scale) * 16.0 / 15.0;
        self.stats.max_error_estimate = self.stats.max_error_estimate.max(estimate);
        if estimate > self.error_tolerance {
            return Err(Error::StepTooLarge { estimate, tolerance: self.error_tolerance });
        }

        let norm_sqr: f64 = self.full[..2 * n].iter().map(|v| v * v).sum();
        let drift = (norm_sqr - 1.0).abs();
        self.stats.max_raw_norm_drift = self.stats.max_raw_norm_drift.max(drift);
        if drift > self.renorm_threshold {
            let k = 1.0 / norm_sqr.sqrt();
            for v in self.full[..2 * n].iter_mut() {
                *v *= k;
            }
            self.stats.renormalizations += 1;
        }
        self.stats.steps += 1;
        Ok(unpack(&self.full, n, t_new))
    }

    /// Integrate to `t_final`, landing exactly on each output time. Empty
    /// `output_times` samples the initial and final states.
    pub fn integrate<M: HybridModel + ?Sized>(
        &mut self,
        model: &M,
        initial: &HybridState,
        t_final: f64,
        output_times: &[f64],
    ) -> Result<Trajectory> {
        self.run(model, initial, t_final, output_times, |_| {})
    }

    /// As [`integrate`](Self::integrate), calling `observer` after every step.
    pub fn run<M, F>(
        &mut self,
        model: &M,
        initial: &HybridState,
        t_final: f64,
        output_times: &[f64],
        mut observer: F,
    ) -> Result<Trajectory>
    where
        M: HybridModel + ?Sized,
        F: FnMut(&HybridState),
    {
        if !initial.is_finite() {
            return Err(Error::NonFinite { t: initial.t });
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {}", self.dt)));
        }
        let t0 = initial.t;
        let mut outputs = landing_times(t0, t_final, output_times).map_err(Error::InvalidArgument)?;
        if outputs.is_empty() {
            outputs.push(t0);
            if t_final > t0 {
                outputs.push(t_final);
            }
        }
        let sample_count = outputs.len();
        let mut targets = outputs.clone();
        if *targets.last().unwrap() < t_final {
            targets.push(t_final);
        }

        let mut samples = Vec::with_capacity(sample_count);
        let mut diagnostics = Vec::with_capacity(sample_count);
        let mut state = initial.clone();
        let mut next_output = 0;
        for &target in &targets {
            while state.t < target {
                let remaining = target - state.t;
                let landing = remaining <= self.dt * (1.0 + 1e-9);
                let h = if landing { remaining } else { self.dt };
                state = self.step_by(model, &state, h)?;
                if landing {
                    state.t = target;
                }
                observer(&state);
            }
            if next_output < sample_count && outputs[next_output] == target {
                diagnostics.push(diagnose(model, &state));
                samples.push(state.clone());
                next_output += 1;
            }
        }
        Ok(Trajectory { samples, diagnostics, stats: self.stats })
    }
}

/// One reference step from `s`.
pub fn step<M: HybridModel + ?Sized>(model: &M, s: &HybridState, dt: f64) -> Result<HybridState> {
    Integrator::new(model.dim(), dt).step(model, s)
}

/// Integrate at the reference step for the initial position.
pub fn integrate<M: HybridModel + ?Sized>(
    model: &M,
    initial: &HybridState,
    t_final: f64,
    output_times: &[f64],
) -> Result<Trajectory> {
    Integrator::for_model(model, initial.q)?.integrate(model, initial, t_final, output_times)
}

fn pack(s: &HybridState, y: &mut [f64]) {
    let n = s.psi.dim();
    for (j, z) in s.psi.amps().iter().enumerate() {
        y[2 * j] = z.re;
        y[2 * j + 1] = z.im;
    }
    y[2 * n] = s.q.x;
    y[2 * n + 1] = s.q.y;
    y[2 * n + 2] = s.p.x;
    y[2 * n + 3] = s.p.y;
}

fn unpack(y: &[f64], n: usize, t: f64) -> HybridState {
    let amps = (0..n).map(|j| C64::new(y[2 * j], y[2 * j + 1])).collect();
    HybridState {
        psi: QuantumState::from_raw(amps),
        q: Vec2::new(y[2 * n], y[2 * n + 1]),
        p: Vec2::new(y[2 * n + 2], y[2 * n + 3]),
        t,
    }
}

// Blockwise relative difference: psi against unit norm, q against the model
// length, p against sqrt(M * |H|).
fn error_estimate(a: &[f64], b: &[f64], n: usize, length: f64, p_scale: f64) -> f64 {
    let diff = |r: std::ops::Range<usize>| -> f64 {
        r.map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
    };
    let size = |r: std::ops::Range<usize>| -> f64 { r.map(|i| a[i] * a[i]).sum::<f64>().sqrt() };
    let e_psi = diff(0..2 * n);
    let e_q = diff(2 * n..2 * n + 2) / size(2 * n..2 * n + 2).max(length);
    let e_p = diff(2 * n + 2..2 * n + 4) / size(2 * n + 2..2 * n + 4).max(p_scale).max(f64::MIN_POSITIVE);
    e_psi.max(e_q).max(e_p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DipoleSpinModel, ModelParams, SpinBand};

    fn scaled(ratio: f64) -> DipoleSpinModel {
        let p = ModelParams::paper().with_timescale_ratio(ratio).unwrap();
        DipoleSpinModel::scaled(&p).unwrap().0
    }

    fn ground_state(m: &DipoleSpinModel, q: Vec2) -> QuantumState {
        let f = m.eigenframe(q).unwrap();
        QuantumState::new(f.states[0].clone()).unwrap()
    }

    #[test]
    fn free_particle_energy_is_kinetic() {
        let p = ModelParams { mu: 0.0, ..ModelParams::paper() };
        let (m, _) = DipoleSpinModel::scaled(&p).unwrap();
        let s = HybridState::new(
            QuantumState::new(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap(),
            Vec2::new(0.3, 0.1),
            Vec2::new(3.0, -4.0),
            0.0,
        );
        assert_eq!(total_energy(&m, &s), 25.0 / (2.0 * m.mass()));
    }

    #[test]
    fn ground_eigenstate_energy_is_its_eigenvalue() {
        let m = scaled(100.0);
        let q = Vec2::new(0.4, 0.2);
        let s = HybridState::new(ground_state(&m, q), q, Vec2::ZERO, 0.0);
        let e = -m.mu().abs() * m.field_magnitude(q);
        assert!((total_energy(&m, &s) - e).abs() < 1e-15);
    }

    #[test]
    fn decoupled_limit_moves_in_a_straight_line() {
        let p = ModelParams { mu: 0.0, ..ModelParams::paper() };
        let (m, _) = DipoleSpinModel::scaled(&p).unwrap();
        let psi = QuantumState::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let q0 = Vec2::new(0.1, -0.2);
        let p0 = Vec2::new(0.5, 0.25) * m.mass();
        let mut s = HybridState::new(psi.clone(), q0, p0, 0.0);
        let mut it = Integrator::new(2, 0.01);
        for _ in 0..1000 {
            s = it.step(&m, &s).unwrap();
        }
        let expected = q0 + p0 * (s.t / m.mass());
        assert!((s.q - expected).norm() < 1e-12);
        assert_eq!(s.p, p0);
        assert!((s.psi.overlap(&psi) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = scaled(100.0);
        let q = Vec2::new(0.2, 0.0);
        let s = HybridState::new(ground_state(&m, q), q, Vec2::ZERO, 0.0);
        let dt = default_step(&m, q).unwrap();
        let mut it = Integrator::new(2, 8.0 * dt);
        let psi = QuantumState::normalized(vec![C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let s2 = HybridState { psi, ..s.clone() };
        assert!(matches!(it.step(&m, &s2), Err(Error::StepTooLarge { .. })));
        let mut ok = Integrator::new(2, dt);
        assert!(ok.step(&m, &s2).is_ok());
    }

    #[test]
    fn non_finite_initial_state_is_rejected() {
        let m = scaled(100.0);
        let q = Vec2::new(f64::NAN, 0.0);
        let s = HybridState::new(ground_state(&m, Vec2::ZERO), q, Vec2::ZERO, 0.0);
        let mut it = Integrator::new(2, 0.1);
        assert!(matches!(it.integrate(&m, &s, 1.0, &[]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_duration_returns_the_initial_state() {
        let m = scaled(100.0);
        let q = Vec2::new(0.2, 0.1);
        let s = HybridState::new(ground_state(&m, q), q, Vec2::new(1.0, 0.0), 2.5);
        let traj = integrate(&m, &s, 2.5, &[]).unwrap();
        assert_eq!(traj.samples, vec![s]);
        assert_eq!(traj.stats.steps, 0);
    }

    #[test]
    fn output_times_are_landed_exactly() {
        let m = scaled(100.0);
        let q = Vec2::new(0.2, 0.1);
        let s = HybridState::new(ground_state(&m, q), q, Vec2::ZERO, 0.0);
        let mut it = Integrator::for_model(&m, q).unwrap();
        let times = [0.0, 0.37, 1.0, 2.2];
        let traj = it.integrate(&m, &s, 3.0, &times).unwrap();
        let got: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
        assert_eq!(got, times);
        assert_eq!(traj.diagnostics.len(), 4);
    }

    #[test]
    fn eigenstate_actions_are_reported_per_band() {
        let m = scaled(100.0);
        let q = Vec2::new(0.2, 0.1);
        let s = HybridState::new(ground_state(&m, q), q, Vec2::ZERO, 0.0);
        let d = diagnose(&m, &s);
        let a = d.actions.unwrap();
        assert!((a[m.band_index(SpinBand::Minus)] - 1.0).abs() < 1e-15);
    }
}

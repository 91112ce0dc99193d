//! Adiabatic slow dynamics: frozen band actions, the action-weighted band
//! force, and the work-free curvature force `(B v_y, -B v_x)`.

use std::cell::Cell;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HybridModel, Scales, Vec2};
use crate::ode::{landing_times, Rk4};

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveState {
    pub q: Vec2,
    pub v: Vec2,
    /// Frozen actions in ascending-energy band order.
    pub actions: Vec<f64>,
    pub t: f64,
}

impl EffectiveState {
    pub fn new(q: Vec2, v: Vec2, actions: Vec<f64>, t: f64) -> Self {
        Self { q, v, actions, t }
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.v.is_finite() && self.t.is_finite() && self.actions.iter().all(|a| a.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveTrajectory {
    pub samples: Vec<EffectiveState>,
    /// Slow energy of each sample (see [`effective_energy`]).
    pub energies: Vec<f64>,
    pub steps: u64,
}

/// `sum_n (I_n / hbar) E_n(q)`.
pub fn adiabatic_energy<M: HybridModel + ?Sized>(model: &M, q: Vec2, actions: &[f64]) -> Result<f64> {
    check_actions(model, actions)?;
    let frame = model.eigenframe(q)?;
    Ok(frame.energies.iter().zip(actions).map(|(e, i)| e * i).sum::<f64>() / model.hbar())
}

/// Adiabatic plus kinetic plus external potential energy. Conserved by the
/// effective flow since the curvature force does no work.
pub fn effective_energy<M: HybridModel + ?Sized>(model: &M, s: &EffectiveState) -> Result<f64> {
    Ok(adiabatic_energy(model, s.q, &s.actions)?
        + 0.5 * model.mass() * s.v.norm_sqr()
        + model.potential(s.q))
}

/// Force from band energies and external potential only.
pub fn gradient_force<M: HybridModel + ?Sized>(model: &M, q: Vec2, actions: &[f64]) -> Result<Vec2> {
    check_actions(model, actions)?;
    let grads = model.band_energy_gradients(q)?;
    let hbar = model.hbar();
    let band = grads
        .iter()
        .zip(actions)
        .fold(Vec2::ZERO, |acc, (g, i)| acc + *g * (i / hbar));
    Ok(-band - model.potential_gradient(q))
}

/// `(B v_y, -B v_x)`.
pub fn lorentz_force(curvature: f64, v: Vec2) -> Vec2 {
    Vec2::new(curvature * v.y, -curvature * v.x)
}

pub fn effective_force<M: HybridModel + ?Sized>(model: &M, s: &EffectiveState) -> Result<Vec2> {
    let b = model.curvature(s.q, &s.actions)?;
    Ok(gradient_force(model, s.q, &s.actions)? + lorentz_force(b, s.v))
}

/// RK4 on `(q, v)` at fixed step `dt`, landing exactly on output times.
/// Empty `output_times` samples the initial and final states.
pub fn integrate_effective<M: HybridModel + ?Sized>(
    model: &M,
    initial: &EffectiveState,
    t_final: f64,
    output_times: &[f64],
    dt: f64,
) -> Result<EffectiveTrajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !initial.is_finite() {
        return Err(Error::NonFinite { t: initial.t });
    }
    check_actions(model, &initial.actions)?;
    let t0 = initial.t;
    let mut outputs = landing_times(t0, t_final, output_times).map_err(Error::InvalidArgument)?;
    if outputs.is_empty() {
        outputs.push(t0);
        if t_final > t0 {
            outputs.push(t_final);
        }
    }
    let mut targets = outputs.clone();
    if *targets.last().unwrap() < t_final {
        targets.push(t_final);
    }

    let actions = initial.actions.clone();
    let mass = model.mass();
    let failure: Cell<Option<Error>> = Cell::new(None);
    let mut deriv = |y: &[f64], dy: &mut [f64]| {
        let q = Vec2::new(y[0], y[1]);
        let v = Vec2::new(y[2], y[3]);
        let f = model
            .curvature(q, &actions)
            .and_then(|b| Ok(gradient_force(model, q, &actions)? + lorentz_force(b, v)));
        let f = match f {
            Ok(f) => f,
            Err(e) => {
                let first = failure.take().unwrap_or(e);
                failure.set(Some(first));
                Vec2::ZERO
            }
        };
        dy[0] = v.x;
        dy[1] = v.y;
        dy[2] = f.x / mass;
        dy[3] = f.y / mass;
    };

    let mut rk = Rk4::new(4);
    let mut y = [initial.q.x, initial.q.y, initial.v.x, initial.v.y];
    let mut out = [0.0; 4];
    let mut t = t0;
    let mut steps = 0;
    let mut samples = Vec::with_capacity(outputs.len());
    let mut next_output = 0;
    for &target in &targets {
        while t < target {
            let remaining = target - t;
            let landing = remaining <= dt * (1.0 + 1e-9);
            let h = if landing { remaining } else { dt };
            rk.step(&mut deriv, &y, h, &mut out);
            if let Some(e) = failure.take() {
                return Err(e);
            }
            t = if landing { target } else { t + h };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            y = out;
            steps += 1;
        }
        if next_output < outputs.len() && outputs[next_output] == target {
            samples.push(EffectiveState::new(Vec2::new(y[0], y[1]), Vec2::new(y[2], y[3]), actions.clone(), t));
            next_output += 1;
        }
    }
    let energies = samples
        .iter()
        .map(|s| effective_energy(model, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(EffectiveTrajectory { samples, energies, steps })
}

/// Circulation frequencies at fixed radius from the force balance
/// `M w^2 + B w + F_r / r = 0`, `w` signed positive counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencySplitReport {
    pub radius: f64,
    pub nu_cw: f64,
    pub nu_ccw: f64,
    pub delta_nu: f64,
    pub curvature_at_r: f64,
}

impl FrequencySplitReport {
    /// `B / 2 pi M` for comparison with `delta_nu`.
    pub fn predicted_delta_nu(&self, mass: f64) -> f64 {
        self.curvature_at_r / (2.0 * PI * mass)
    }

    /// Converts a report computed in scaled units.
    pub fn to_si(&self, scales: &Scales) -> Self {
        let f = scales.frequency();
        Self {
            radius: self.radius * scales.length,
            nu_cw: self.nu_cw * f,
            nu_ccw: self.nu_ccw * f,
            delta_nu: self.delta_nu * f,
            curvature_at_r: self.curvature_at_r * scales.curvature,
        }
    }
}

/// Signed angular velocities `(w_cw, w_ccw)` of circular orbits of radius
/// `r` about the origin, probed along +x.
pub fn circular_orbit_roots<M: HybridModel + ?Sized>(model: &M, r: f64, actions: &[f64]) -> Result<(f64, f64, f64)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be > 0, got {r}")));
    }
    let q = Vec2::new(r, 0.0);
    let radial = gradient_force(model, q, actions)?.x;
    let b = model.curvature(q, actions)?;
    if !(radial < 0.0) {
        return Err(Error::NoOrbit { radius: r, radial_force: radial });
    }
    let m = model.mass();
    let disc = (b * b - 4.0 * m * radial / r).sqrt();
    // stable quadratic roots: the pair continuous with the B = 0 limit
    let big = -0.5 * (b + disc.copysign(b));
    let (w1, w2) = if big != 0.0 { (big / m, radial / r / big) } else { (disc / (2.0 * m), -disc / (2.0 * m)) };
    let (cw, ccw) = if w1 < w2 { (w1, w2) } else { (w2, w1) };
    Ok((cw, ccw, b))
}

/// Clockwise and anticlockwise circulation frequencies at radius `r`.
/// `delta_nu = B(r) / 2 pi M`, which equals `nu_cw - nu_ccw` up to rounding
/// of the two frequencies.
pub fn frequency_split<M: HybridModel + ?Sized>(model: &M, r: f64, actions: &[f64]) -> Result<FrequencySplitReport> {
    let (cw, ccw, b) = circular_orbit_roots(model, r, actions)?;
    // the roots sum to -B / M, so the split is exact without the
    // cancellation in nu_cw - nu_ccw
    Ok(FrequencySplitReport {
        radius: r,
        nu_cw: -cw / (2.0 * PI),
        nu_ccw: ccw / (2.0 * PI),
        delta_nu: b / (2.0 * PI * model.mass()),
        curvature_at_r: b,
    })
}

fn check_actions<M: HybridModel + ?Sized>(model: &M, actions: &[f64]) -> Result<()> {
    if actions.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: actions.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{central_gradient, DipoleSpinModel, ModelParams};

    fn scaled(ratio: f64) -> DipoleSpinModel {
        let p = ModelParams::paper().with_timescale_ratio(ratio).unwrap();
        DipoleSpinModel::scaled(&p).unwrap().0
    }

    #[test]
    fn equal_populations_at_rest_feel_no_force() {
        let m = scaled(100.0);
        let s = EffectiveState::new(Vec2::new(0.4, -0.3), Vec2::ZERO, m.actions_from_populations(0.5, 0.5), 0.0);
        assert!(effective_force(&m, &s).unwrap().norm() < 1e-15);
    }

    #[test]
    fn force_at_rest_is_radial() {
        let m = scaled(100.0);
        let q = Vec2::new(0.4, -0.3);
        let s = EffectiveState::new(q, Vec2::ZERO, m.actions_from_populations(0.0, 1.0), 0.0);
        let f = effective_force(&m, &s).unwrap();
        assert!(f.cross(q).abs() < 1e-14 * f.norm());
        // ground band of mu < 0 is attracted to the axis
        assert!(f.dot(q) < 0.0);
    }

    #[test]
    fn gradient_term_matches_finite_difference() {
        let m = scaled(100.0);
        for (plus, minus) in [(1.0, 0.0), (0.2, 0.8)] {
            let actions = m.actions_from_populations(plus, minus);
            for q in [Vec2::new(0.3, 0.1), Vec2::new(-1.2, 0.7)] {
                // (|a-|^2 - |a+|^2) mu |B(r)|
                let potential = |p: Vec2| (minus - plus) * m.mu() * m.field_magnitude(p);
                let expected = -central_gradient(potential, q, 1e-6);
                let got = gradient_force(&m, q, &actions).unwrap();
                assert!((got - expected).norm() < 1e-8 * expected.norm(), "{got:?} vs {expected:?}");
            }
        }
    }

    #[test]
    fn curvature_force_does_no_work() {
        let m = scaled(100.0);
        let s = EffectiveState::new(Vec2::new(0.3, 0.0), Vec2::new(0.0, 0.2), m.actions_from_populations(0.0, 1.0), 0.0);
        let period = m.slow_period();
        let traj = integrate_effective(&m, &s, 3.0 * period, &[], period / 2000.0).unwrap();
        let e0 = traj.energies[0];
        let e1 = *traj.energies.last().unwrap();
        assert!(((e1 - e0) / e0).abs() < 1e-10);
    }

    #[test]
    fn chirality_flips_with_moment_sign_and_population_swap() {
        let p = ModelParams::paper().with_timescale_ratio(100.0).unwrap();
        let mut flipped = p;
        flipped.mu = -p.mu;
        let a = DipoleSpinModel::scaled(&p).unwrap().0;
        let b = DipoleSpinModel::scaled(&flipped).unwrap().0;
        let start = |m: &DipoleSpinModel, plus, minus| {
            EffectiveState::new(Vec2::ZERO, Vec2::new(0.1, 0.0), m.actions_from_populations(plus, minus), 0.0)
        };
        let period = a.slow_period();
        let times: Vec<f64> = (1..=20).map(|k| period * k as f64 / 20.0).collect();
        let ta = integrate_effective(&a, &start(&a, 0.0, 1.0), period, &times, period / 500.0).unwrap();
        let tb = integrate_effective(&b, &start(&b, 1.0, 0.0), period, &times, period / 500.0).unwrap();
        for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
            assert!((sa.q.x - sb.q.x).abs() < 1e-13, "{:?} {:?}", sa.q, sb.q);
            assert!((sa.q.y + sb.q.y).abs() < 1e-13);
        }
        assert!(ta.samples[5].q.y.abs() > 1e-3);
    }

    #[test]
    fn radial_start_without_curvature_stays_on_ray() {
        let mut p = ModelParams::paper().with_timescale_ratio(100.0).unwrap();
        p.trap_stiffness = 1e-15;
        let m = DipoleSpinModel::scaled(&p).unwrap().0;
        let dir = Vec2::new(0.6, 0.8);
        let s = EffectiveState::new(dir * 0.5, dir * 0.1, m.actions_from_populations(0.5, 0.5), 0.0);
        let period = m.slow_period();
        let times: Vec<f64> = (1..=10).map(|k| period * k as f64 / 10.0).collect();
        let traj = integrate_effective(&m, &s, period, &times, period / 1000.0).unwrap();
        for st in &traj.samples {
            assert!(st.q.cross(dir).abs() < 1e-12 * st.q.norm().max(1.0));
        }
    }

    #[test]
    fn split_matches_curvature_over_mass() {
        let m = scaled(100.0);
        let actions = m.actions_from_populations(0.0, 1.0);
        let rep = frequency_split(&m, 0.3, &actions).unwrap();
        assert!((rep.nu_cw - rep.nu_ccw - rep.delta_nu).abs() < 1e-12 * rep.nu_ccw);
        assert!(rep.curvature_at_r < 0.0 && rep.delta_nu < 0.0);
    }

    #[test]
    fn reference_parameters_split() {
        let p = ModelParams::paper();
        let m = DipoleSpinModel::from_params(&p).unwrap();
        let actions = m.actions_from_populations(0.0, 1.0);
        let rep = frequency_split(&m, 1e-9, &actions).unwrap();
        assert!((rep.delta_nu.abs() - 7.55e-9).abs() < 0.01e-9, "{}", rep.delta_nu);
    }

    #[test]
    fn orbit_requires_attraction() {
        let m = scaled(100.0);
        // excited band of mu < 0 is pushed away from the axis
        let err = frequency_split(&m, 0.3, &m.actions_from_populations(1.0, 0.0));
        assert!(matches!(err, Err(Error::NoOrbit { .. })));
        let err = frequency_split(&m, 0.3, &m.actions_from_populations(0.5, 0.5));
        assert!(matches!(err, Err(Error::NoOrbit { .. })));
        assert!(frequency_split(&m, -1.0, &m.actions_from_populations(0.0, 1.0)).is_err());
    }

    #[test]
    fn trapped_equal_populations_have_no_split() {
        let mut p = ModelParams::paper().with_timescale_ratio(100.0).unwrap();
        p.trap_stiffness = 1e-15;
        let m = DipoleSpinModel::scaled(&p).unwrap().0;
        let rep = frequency_split(&m, 0.3, &m.actions_from_populations(0.5, 0.5)).unwrap();
        assert_eq!(rep.delta_nu, 0.0);
        assert_eq!(rep.nu_cw, rep.nu_ccw);
    }
}

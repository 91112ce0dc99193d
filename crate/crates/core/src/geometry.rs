//! Berry connection, population-weighted vector potential, curvature and
//! loop phases, computed numerically from a model's eigenframes.
//!
//! Connections are gauge dependent and need the model's smooth gauge. The
//! curvature (plaquette) and loop phases are built from overlap products and
//! are independent of the eigenvector phases.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inner, HybridModel, Vec2};

/// Connection finite-difference step, in units of the model length.
pub const DEFAULT_CONNECTION_STEP: f64 = 1e-6;
/// Plaquette edge, in units of the model length.
pub const DEFAULT_PLAQUETTE: f64 = 1e-3;
/// Overlaps smaller than this mean the discretization is too coarse or a
/// level crossing is nearby.
pub const MIN_OVERLAP: f64 = 0.5;
pub const MIN_LOOP_POINTS: usize = 512;
pub const LOOP_CONVERGENCE: f64 = 1e-8;
const MAX_LOOP_POINTS: usize = 1 << 21;
/// Largest per-segment phase increment for which the winding is trusted.
pub const WINDING_INCREMENT_LIMIT: f64 = PI / 4.0;

/// Central-difference connection `i <phi_n | grad phi_n>` with the residual
/// real part of `<phi_n|grad phi_n>` as an error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionEstimate {
    pub value: Vec2,
    pub imag_residual: f64,
}

pub fn berry_connection<M: HybridModel + ?Sized>(
    model: &M,
    q: Vec2,
    band: usize,
    h: f64,
) -> Result<ConnectionEstimate> {
    check_band(model, band)?;
    let center = model.eigenframe(q)?;
    let phi = &center.states[band];
    let mut value = [0.0; 2];
    let mut residual: f64 = 0.0;
    for (axis, e) in [Vec2::new(h, 0.0), Vec2::new(0.0, h)].into_iter().enumerate() {
        let plus = model.eigenframe(q + e)?;
        let minus = model.eigenframe(q - e)?;
        let deriv: Vec<C64> = plus.states[band]
            .iter()
            .zip(&minus.states[band])
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let c = inner(phi, &deriv);
        // i * c
        value[axis] = -c.im;
        residual = residual.max(c.re.abs());
    }
    Ok(ConnectionEstimate {
        value: Vec2::new(value[0], value[1]),
        imag_residual: residual,
    })
}

/// `sum_n I_n A_n`.
pub fn weighted_potential(connections: &[Vec2], actions: &[f64]) -> Result<Vec2> {
    if connections.len() != actions.len() {
        return Err(Error::DimensionMismatch {
            expected: connections.len(),
            got: actions.len(),
        });
    }
    Ok(connections
        .iter()
        .zip(actions)
        .fold(Vec2::ZERO, |acc, (a, &i)| acc + *a * i))
}

/// Connection per band, weighted potential and curvature at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricField {
    pub connection: Vec<Vec2>,
    pub weighted_potential: Vec2,
    pub curvature: f64,
}

impl GeometricField {
    pub fn evaluate<M: HybridModel + ?Sized>(model: &M, q: Vec2, actions: &[f64]) -> Result<Self> {
        let h = DEFAULT_CONNECTION_STEP * model.length_scale();
        let connection = (0..model.dim())
            .map(|n| berry_connection(model, q, n, h).map(|c| c.value))
            .collect::<Result<Vec<_>>>()?;
        let weighted_potential = weighted_potential(&connection, actions)?;
        let curvature = model.curvature(q, actions)?;
        Ok(Self {
            connection,
            weighted_potential,
            curvature,
        })
    }
}

/// Phase of the Bargmann invariant `prod_k <phi_k|phi_{k+1}>` around a closed
/// sequence of states (the last connects back to the first). Equals minus
/// the line integral of the connection, modulo 2 pi.
pub fn bargmann_phase(states: &[Vec<C64>]) -> Result<f64> {
    let mut product = C64::new(1.0, 0.0);
    for k in 0..states.len() {
        let o = inner(&states[k], &states[(k + 1) % states.len()]);
        if o.norm() < MIN_OVERLAP {
            return Err(degenerate_overlap(o.norm()));
        }
        product *= o / o.norm();
    }
    Ok(product.arg())
}

fn degenerate_overlap(magnitude: f64) -> Error {
    Error::Degenerate {
        gap: magnitude,
        tolerance: MIN_OVERLAP,
    }
}

/// Per-band curvature from one counter-clockwise plaquette of edge `delta`
/// centred on `q`: `F_n delta^2 = -arg(W_n)`.
pub fn band_curvatures_numeric<M: HybridModel + ?Sized>(
    model: &M,
    q: Vec2,
    delta: f64,
) -> Result<Vec<f64>> {
    let h = 0.5 * delta;
    let corners = [
        q + Vec2::new(-h, -h),
        q + Vec2::new(h, -h),
        q + Vec2::new(h, h),
        q + Vec2::new(-h, h),
    ];
    let frames = corners
        .iter()
        .map(|&c| model.eigenframe(c))
        .collect::<Result<Vec<_>>>()?;
    (0..model.dim())
        .map(|n| {
            let states: Vec<Vec<C64>> = frames.iter().map(|f| f.states[n].clone()).collect();
            Ok(-bargmann_phase(&states)? / (delta * delta))
        })
        .collect()
}

/// `sum_n I_n F_n` from a single plaquette; second order in `delta`.
pub fn curvature_numeric<M: HybridModel + ?Sized>(
    model: &M,
    q: Vec2,
    actions: &[f64],
    delta: f64,
) -> Result<f64> {
    if actions.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: actions.len(),
        });
    }
    let bands = band_curvatures_numeric(model, q, delta)?;
    Ok(bands.iter().zip(actions).map(|(f, i)| f * i).sum())
}

/// Richardson combination of plaquettes `delta` and `delta / 2`.
pub fn curvature_extrapolated<M: HybridModel + ?Sized>(
    model: &M,
    q: Vec2,
    actions: &[f64],
    delta: f64,
) -> Result<f64> {
    let coarse = curvature_numeric(model, q, actions, delta)?;
    let fine = curvature_numeric(model, q, actions, 0.5 * delta)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Closed polyline in the plane, traversed in order, for one band.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPath {
    points: Vec<Vec2>,
    band: usize,
}

impl LoopPath {
    /// `points` must start and end on the same point and have consecutive
    /// spacing at most `max_spacing`.
    pub fn new(points: Vec<Vec2>, band: usize, max_spacing: f64) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidPath(format!("{} points is too few", points.len())));
        }
        if points.first() != points.last() {
            return Err(Error::InvalidPath("path is not closed".into()));
        }
        if let Some(w) = points.windows(2).find(|w| (w[1] - w[0]).norm() > max_spacing) {
            return Err(Error::InvalidPath(format!(
                "spacing {} exceeds {max_spacing}",
                (w[1] - w[0]).norm()
            )));
        }
        Ok(Self { points, band })
    }

    /// Counter-clockwise circle with `segments` equal segments.
    pub fn circle(center: Vec2, radius: f64, segments: usize, band: usize) -> Self {
        let mut points: Vec<Vec2> = (0..segments)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / segments as f64;
                center + Vec2::new(radius * a.cos(), radius * a.sin())
            })
            .collect();
        points.push(points[0]);
        Self { points, band }
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points, band: self.band }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn band(&self) -> usize {
        self.band
    }
}

/// Geometric phase `-oint A_n . dq` of a loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopPhase {
    /// Gauge-invariant value in `(-pi, pi]`.
    pub phase: f64,
    /// Continuous value including whole turns, when every segment increment
    /// stays below the winding limit in the model's gauge.
    pub unwrapped: Option<f64>,
    pub winding: Option<i64>,
    pub segments: usize,
}

impl LoopPhase {
    pub fn winding_resolved(&self) -> bool {
        self.unwrapped.is_some()
    }
}

pub fn berry_phase_loop<M: HybridModel + ?Sized>(model: &M, path: &LoopPath) -> Result<LoopPhase> {
    check_band(model, path.band)?;
    let open = &path.points[..path.points.len() - 1];
    let states = open
        .par_iter()
        .map(|&q| model.eigenframe(q).map(|f| f.states[path.band].clone()))
        .collect::<Result<Vec<_>>>()?;
    let overlaps: Vec<C64> = (0..states.len())
        .into_par_iter()
        .map(|k| inner(&states[k], &states[(k + 1) % states.len()]))
        .collect();
    let mut product = C64::new(1.0, 0.0);
    let mut increments = 0.0;
    let mut resolved = true;
    for o in &overlaps {
        let m = o.norm();
        if m < MIN_OVERLAP {
            return Err(degenerate_overlap(m));
        }
        product *= o / m;
        let inc = o.arg();
        resolved &= inc.abs() < WINDING_INCREMENT_LIMIT;
        increments += inc;
    }
    let phase = product.arg();
    let (unwrapped, winding) = if resolved {
        (Some(increments), Some(((increments - phase) / (2.0 * PI)).round() as i64))
    } else {
        (None, None)
    };
    Ok(LoopPhase {
        phase,
        unwrapped,
        winding,
        segments: overlaps.len(),
    })
}

/// Loop phase around a counter-clockwise circle, doubling the number of
/// segments from [`MIN_LOOP_POINTS`] until successive values agree to
/// [`LOOP_CONVERGENCE`].
pub fn berry_phase_circle<M: HybridModel + ?Sized>(
    model: &M,
    center: Vec2,
    radius: f64,
    band: usize,
) -> Result<LoopPhase> {
    let mut segments = MIN_LOOP_POINTS;
    let mut prev = berry_phase_loop(model, &LoopPath::circle(center, radius, segments, band))?;
    loop {
        segments *= 2;
        let next = berry_phase_loop(model, &LoopPath::circle(center, radius, segments, band))?;
        let change = (next.phase - prev.phase + PI).rem_euclid(2.0 * PI) - PI;
        if change.abs() < LOOP_CONVERGENCE {
            return Ok(next);
        }
        if segments >= MAX_LOOP_POINTS {
            return Err(Error::InvalidPath(format!(
                "loop phase not converged at {segments} segments (change {change:e})"
            )));
        }
        prev = next;
    }
}

/// `dTheta_n/dt = E_n / hbar - A_n . qdot`.
pub fn angle_rate<M: HybridModel + ?Sized>(model: &M, q: Vec2, qdot: Vec2, band: usize) -> Result<f64> {
    check_band(model, band)?;
    let energy = model.eigenframe(q)?.energies[band];
    let dynamical = energy / model.hbar();
    if qdot == Vec2::ZERO {
        return Ok(dynamical);
    }
    let a = berry_connection(model, q, band, DEFAULT_CONNECTION_STEP * model.length_scale())?;
    Ok(dynamical - a.value.dot(qdot))
}

/// Curvature on a regular `n x n` grid over `[lo, hi]^2`, row-major in y.
pub fn curvature_grid<M: HybridModel + ?Sized>(
    model: &M,
    lo: f64,
    hi: f64,
    n: usize,
    actions: &[f64],
) -> Result<Vec<(Vec2, f64)>> {
    let coord = |k: usize| {
        if n == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * k as f64 / (n - 1) as f64
        }
    };
    (0..n * n)
        .into_par_iter()
        .map(|k| {
            let q = Vec2::new(coord(k % n), coord(k / n));
            model.curvature(q, actions).map(|b| (q, b))
        })
        .collect()
}

fn check_band<M: HybridModel + ?Sized>(model: &M, band: usize) -> Result<()> {
    if band >= model.dim() {
        return Err(Error::InvalidArgument(format!(
            "band {band} out of range for dimension {}",
            model.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DipoleSpinModel, HermitianOperator, ModelParams, SpinBand};

    fn model() -> DipoleSpinModel {
        DipoleSpinModel::scaled(&ModelParams::paper()).unwrap().0
    }

    /// Field along a fixed axis everywhere; only its strength varies.
    struct FixedAxis;

    impl HybridModel for FixedAxis {
        fn dim(&self) -> usize {
            2
        }
        fn hbar(&self) -> f64 {
            1.0
        }
        fn mass(&self) -> f64 {
            1.0
        }
        fn length_scale(&self) -> f64 {
            1.0
        }
        fn hamiltonian(&self, q: Vec2) -> HermitianOperator {
            let b = 1.0 + 0.3 * q.x * q.x + 0.2 * q.y;
            let (nx, nz) = (0.6, 0.8);
            HermitianOperator::new(
                2,
                vec![
                    C64::new(b * nz, 0.0),
                    C64::new(b * nx, 0.0),
                    C64::new(b * nx, 0.0),
                    C64::new(-b * nz, 0.0),
                ],
            )
            .unwrap()
        }
    }

    #[test]
    fn constant_direction_has_no_connection_or_phase() {
        let q = Vec2::new(0.3, -0.4);
        for band in 0..2 {
            let a = berry_connection(&FixedAxis, q, band, 1e-6).unwrap();
            assert!(a.value.norm() < 1e-9);
        }
        let p = berry_phase_loop(&FixedAxis, &LoopPath::circle(q, 0.2, 512, 0)).unwrap();
        assert!(p.phase.abs() < 1e-12);
        assert_eq!(curvature_numeric(&FixedAxis, q, &[1.0, 0.0], 1e-3).unwrap(), 0.0);
    }

    #[test]
    fn weighted_potential_examples() {
        let a = vec![Vec2::new(0.3, -1.2), Vec2::new(-0.3, 1.2)];
        let hbar = 1.054_571_817e-34;
        assert_eq!(weighted_potential(&a, &[hbar, 0.0]).unwrap(), a[0] * hbar);
        assert_eq!(weighted_potential(&a, &[hbar / 2.0, hbar / 2.0]).unwrap(), Vec2::ZERO);
        assert!(weighted_potential(&a, &[1.0]).is_err());
    }

    #[test]
    fn equal_populations_have_zero_curvature() {
        let m = model();
        let actions = m.actions_from_populations(0.5, 0.5);
        for q in [Vec2::ZERO, Vec2::new(0.7, 1.1), Vec2::new(-2.0, 0.5)] {
            let b = curvature_numeric(&m, q, &actions, 1e-3).unwrap();
            assert!(b.abs() < 1e-9, "{b}");
            assert_eq!(m.curvature(q, &actions).unwrap(), 0.0);
        }
    }

    /// Field direction turning in the x-z plane at 3 rad per unit x.
    struct Rotating;

    impl HybridModel for Rotating {
        fn dim(&self) -> usize {
            2
        }
        fn hbar(&self) -> f64 {
            1.0
        }
        fn mass(&self) -> f64 {
            1.0
        }
        fn length_scale(&self) -> f64 {
            1.0
        }
        fn hamiltonian(&self, q: Vec2) -> HermitianOperator {
            let (s, c) = (3.0 * q.x).sin_cos();
            HermitianOperator::new(
                2,
                vec![C64::new(c, 0.0), C64::new(s, 0.0), C64::new(s, 0.0), C64::new(-c, 0.0)],
            )
            .unwrap()
        }
    }

    #[test]
    fn coarse_plaquette_is_refused() {
        let err = band_curvatures_numeric(&Rotating, Vec2::new(0.2, 0.0), 1.0);
        assert!(matches!(err, Err(Error::Degenerate { .. })));
        assert!(band_curvatures_numeric(&Rotating, Vec2::new(0.2, 0.0), 0.1).is_ok());
    }

    #[test]
    fn connection_is_gauge_covariant() {
        // rephase the plus band by exp(i k.q): A -> A - k
        struct Rephased(DipoleSpinModel, Vec2);
        impl HybridModel for Rephased {
            fn dim(&self) -> usize {
                2
            }
            fn hbar(&self) -> f64 {
                1.0
            }
            fn mass(&self) -> f64 {
                1.0
            }
            fn length_scale(&self) -> f64 {
                1.0
            }
            fn hamiltonian(&self, q: Vec2) -> HermitianOperator {
                self.0.hamiltonian(q)
            }
            fn eigenframe(&self, q: Vec2) -> Result<crate::model::EigenFrame> {
                let mut f = self.0.eigenframe(q)?;
                let chi = self.1.dot(q);
                for z in f.states[0].iter_mut() {
                    *z *= C64::from_polar(1.0, chi);
                }
                Ok(f)
            }
        }
        let k = Vec2::new(0.25, -0.4);
        let base = model();
        let q = Vec2::new(0.5, 0.3);
        let a0 = berry_connection(&base, q, 0, 1e-6).unwrap().value;
        let a1 = berry_connection(&Rephased(base, k), q, 0, 1e-6).unwrap().value;
        assert!((a1 - (a0 - k)).norm() < 1e-8);
    }

    #[test]
    fn reversed_loop_negates_phase() {
        let m = model();
        let band = m.band_index(SpinBand::Plus);
        let path = LoopPath::circle(Vec2::new(0.2, 0.1), 0.3, 1024, band);
        let fwd = berry_phase_loop(&m, &path).unwrap();
        let rev = berry_phase_loop(&m, &path.reversed()).unwrap();
        assert!((fwd.phase + rev.phase).abs() < 1e-13);
        assert!(fwd.winding_resolved());
    }

    #[test]
    fn loop_path_validation() {
        let open = vec![Vec2::ZERO, Vec2::new(0.1, 0.0), Vec2::new(0.1, 0.1), Vec2::new(0.0, 0.1)];
        assert!(LoopPath::new(open.clone(), 0, 1.0).is_err());
        let mut closed = open;
        closed.push(Vec2::ZERO);
        assert!(LoopPath::new(closed.clone(), 0, 1.0).is_ok());
        assert!(LoopPath::new(closed, 0, 0.05).is_err());
    }

    #[test]
    fn static_angle_rate_is_dynamical() {
        let m = model();
        let q = Vec2::new(0.4, 0.1);
        let f = m.eigenframe(q).unwrap();
        for n in 0..2 {
            assert_eq!(angle_rate(&m, q, Vec2::ZERO, n).unwrap(), f.energies[n]);
        }
    }

    fn curvature_oracle(r: f64) -> f64 {
        // scaled units, d = hbar = 1, full population in |+>
        let r2 = r * r;
        9.0 * (r2 + 2.0) / (2.0 * ((r2 + 1.0) * (r2 + 4.0)).powf(1.5))
    }

    fn cone_half_angle_cos(r: f64) -> f64 {
        let (a, b) = (2.0 - r * r, 3.0 * r);
        a / (a * a + b * b).sqrt()
    }

    #[test]
    fn connection_matches_field_direction_formula() {
        let m = model();
        let plus = m.band_index(SpinBand::Plus);
        for q in [Vec2::new(0.3, 0.0), Vec2::new(-0.8, 1.1), Vec2::new(2.0, -0.4)] {
            let b = m.field(q);
            let nz = b.bz / b.magnitude();
            let expected = Vec2::new(-q.y, q.x) * (0.5 * (1.0 + nz) / q.norm_sqr());
            let got = berry_connection(&m, q, plus, 1e-6).unwrap();
            assert!((got.value - expected).norm() < 1e-8, "{q:?}");
            assert!(got.imag_residual < 1e-8);
            let minus = berry_connection(&m, q, 1 - plus, 1e-6).unwrap().value;
            assert!((minus + expected).norm() < 1e-8);
            assert!((m.connection_closed_form(q, SpinBand::Plus) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn plaquette_curvature_matches_closed_form() {
        let m = model();
        let actions = m.actions_from_populations(1.0, 0.0);
        for k in 0..=30 {
            let r = 0.1 * k as f64;
            for angle in [0.0, 1.1, 2.5] {
                let q = Vec2::new(r * f64::cos(angle), r * f64::sin(angle));
                let num = curvature_extrapolated(&m, q, &actions, DEFAULT_PLAQUETTE).unwrap();
                let exact = curvature_oracle(r);
                assert!((num - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "r={r}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn plaquette_error_is_second_order() {
        let m = model();
        let actions = m.actions_from_populations(1.0, 0.0);
        let q = Vec2::new(0.6, 0.2);
        let exact = curvature_oracle(q.norm());
        let e1 = (curvature_numeric(&m, q, &actions, 0.1).unwrap() - exact).abs();
        let e2 = (curvature_numeric(&m, q, &actions, 0.05).unwrap() - exact).abs();
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn swapping_populations_negates_curvature() {
        let m = model();
        let q = Vec2::new(0.4, -0.9);
        let a = curvature_numeric(&m, q, &m.actions_from_populations(0.8, 0.2), 1e-3).unwrap();
        let b = curvature_numeric(&m, q, &m.actions_from_populations(0.2, 0.8), 1e-3).unwrap();
        assert!((a + b).abs() < 1e-9 * a.abs());
    }

    #[test]
    fn circle_phase_is_half_solid_angle() {
        let m = model();
        for (band, sign) in [(SpinBand::Plus, -1.0), (SpinBand::Minus, 1.0)] {
            for r in [0.1, 0.5, 1.0, 1.7] {
                let got = berry_phase_circle(&m, Vec2::ZERO, r, m.band_index(band)).unwrap();
                let omega = 2.0 * PI * (1.0 - cone_half_angle_cos(r));
                let expected = sign * 0.5 * omega;
                assert!((got.unwrapped.unwrap() - expected).abs() < 1e-6, "{band:?} r={r}");
                let w = got.winding.unwrap() as f64;
                assert!((got.unwrapped.unwrap() - got.phase - 2.0 * PI * w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn angle_rate_integrates_to_dynamical_plus_geometric_phase() {
        let m = model();
        let band = m.band_index(SpinBand::Plus);
        let (r, period) = (0.5, 3.0);
        let omega = 2.0 * PI / period;
        let n = 2000;
        let dt = period / n as f64;
        let mut total = 0.0;
        for k in 0..n {
            // midpoint rule
            let a = omega * (k as f64 + 0.5) * dt;
            let q = Vec2::new(r * a.cos(), r * a.sin());
            let qdot = Vec2::new(-r * omega * a.sin(), r * omega * a.cos());
            total += angle_rate(&m, q, qdot, band).unwrap() * dt;
        }
        let energy = m.eigenframe(Vec2::new(r, 0.0)).unwrap().energies[band];
        let geometric = berry_phase_circle(&m, Vec2::ZERO, r, band).unwrap().unwrapped.unwrap();
        assert!((total - (energy * period + geometric)).abs() < 1e-6);
    }

    proptest::proptest! {
        #[test]
        fn loop_phase_ignores_eigenvector_phases(
            phases in proptest::collection::vec(-PI..PI, 64),
            x in -1.0..1.0f64,
            y in -1.0..1.0f64,
        ) {
            let m = model();
            let path = LoopPath::circle(Vec2::new(x, y), 0.4, 64, 0);
            let states: Vec<Vec<C64>> = path.points()[..64]
                .iter()
                .map(|&q| m.eigenframe(q).unwrap().states[0].clone())
                .collect();
            let rephased: Vec<Vec<C64>> = states
                .iter()
                .zip(&phases)
                .map(|(s, &chi)| s.iter().map(|z| z * C64::from_polar(1.0, chi)).collect())
                .collect();
            let a = bargmann_phase(&states).unwrap();
            let b = bargmann_phase(&rephased).unwrap();
            let diff = (a - b + PI).rem_euclid(2.0 * PI) - PI;
            proptest::prop_assert!(diff.abs() < 1e-12);
        }
    }
}

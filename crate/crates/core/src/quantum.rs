//! State vectors of the fast subsystem and the action-angle chart over an
//! instantaneous eigenbasis.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inner, EigenFrame, HybridModel, Vec2};

/// Allowed deviation of `sum |psi_j|^2` from one.
pub const NORM_TOLERANCE: f64 = 1e-10;
/// Populations below this have no meaningful phase; their angle is reported as 0.
pub const PHASE_UNDERFLOW: f64 = 1e-30;
/// Allowed relative deviation of the summed actions from hbar.
pub const ACTION_SUM_TOLERANCE: f64 = 1e-8;

/// Amplitudes of the fast subsystem, unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amps: Vec<C64>,
}

impl QuantumState {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let norm_sqr = norm_sqr(&amps);
        if !((norm_sqr - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(Error::NotNormalized { norm_sqr });
        }
        Ok(Self { amps })
    }

    /// Normalize arbitrary nonzero amplitudes.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let n = norm_sqr(&amps).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::NotNormalized { norm_sqr: n * n });
        }
        for z in amps.iter_mut() {
            *z /= n;
        }
        Ok(Self { amps })
    }

    /// No normalization check; used for integrator output whose norm drift is
    /// tracked separately.
    pub(crate) fn from_raw(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    /// `|<self|other>|`, insensitive to a global phase.
    pub fn overlap(&self, other: &QuantumState) -> f64 {
        inner(&self.amps, &other.amps).norm()
    }

    pub fn conj(&self) -> Self {
        Self {
            amps: self.amps.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Multiply by a global phase `exp(i chi)`.
    pub fn rephased(&self, chi: f64) -> Self {
        let p = C64::from_polar(1.0, chi);
        Self {
            amps: self.amps.iter().map(|z| z * p).collect(),
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Canonical action-angle coordinates: `I_n = hbar |a_n|^2`,
/// `Theta_n = -arg(a_n)` in `(-pi, pi]`, with `a_n = <phi_n|psi>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionAngleState {
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
}

impl ActionAngleState {
    /// `|a_n|^2`.
    pub fn populations(&self, hbar: f64) -> Vec<f64> {
        self.actions.iter().map(|i| i / hbar).collect()
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// `d psi / dt = -(i / hbar) H1(q) psi`.
pub fn schrodinger_rhs<M: HybridModel + ?Sized>(psi: &QuantumState, q: Vec2, model: &M) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); psi.dim()];
    model.apply_hamiltonian(q, psi.amps(), &mut out);
    let k = C64::new(0.0, -1.0 / model.hbar());
    for z in out.iter_mut() {
        *z *= k;
    }
    out
}

pub fn to_action_angle(psi: &QuantumState, frame: &EigenFrame, hbar: f64) -> Result<ActionAngleState> {
    if psi.dim() != frame.dim() {
        return Err(Error::DimensionMismatch {
            expected: frame.dim(),
            got: psi.dim(),
        });
    }
    let coeffs = frame.project(psi.amps());
    let actions = coeffs.iter().map(|a| hbar * a.norm_sqr()).collect();
    let angles = coeffs
        .iter()
        .map(|a| {
            if a.norm_sqr() < PHASE_UNDERFLOW {
                0.0
            } else {
                wrap_angle(-a.arg())
            }
        })
        .collect();
    Ok(ActionAngleState { actions, angles })
}

pub fn from_action_angle(aa: &ActionAngleState, frame: &EigenFrame, hbar: f64) -> Result<QuantumState> {
    let n = frame.dim();
    if aa.actions.len() != n || aa.angles.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: aa.actions.len().max(aa.angles.len()),
        });
    }
    if let Some(i) = aa.actions.iter().position(|&a| !(a >= 0.0)) {
        return Err(Error::BadActions(format!(
            "action {i} is negative or NaN ({})",
            aa.actions[i]
        )));
    }
    let total: f64 = aa.actions.iter().sum();
    if !((total - hbar).abs() <= ACTION_SUM_TOLERANCE * hbar) {
        return Err(Error::BadActions(format!(
            "actions sum to {total:e}, expected hbar = {hbar:e}"
        )));
    }
    let mut amps = vec![C64::new(0.0, 0.0); n];
    for ((phi, &action), &angle) in frame.states.iter().zip(&aa.actions).zip(&aa.angles) {
        let a = C64::from_polar((action / hbar).sqrt(), -angle);
        for (z, p) in amps.iter_mut().zip(phi) {
            *z += a * p;
        }
    }
    QuantumState::normalized(amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{eigensystem, GaugeAnchor, HermitianOperator};
    use proptest::prelude::*;

    fn standard_frame(n: usize) -> EigenFrame {
        let e: Vec<f64> = (0..n).map(|i| i as f64).collect();
        eigensystem(&HermitianOperator::from_real_diagonal(&e), &GaugeAnchor::LargestComponent).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    struct Constant(HermitianOperator);

    impl HybridModel for Constant {
        fn dim(&self) -> usize {
            self.0.dim()
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
        fn hamiltonian(&self, _q: Vec2) -> HermitianOperator {
            self.0.clone()
        }
    }

    #[test]
    fn stationary_state_rotates_its_phase() {
        let m = Constant(HermitianOperator::from_real_diagonal(&[-0.3, 0.8]));
        let psi = QuantumState::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let rhs = schrodinger_rhs(&psi, Vec2::ZERO, &m);
        assert_eq!(rhs, vec![c(0.0, 0.3), c(0.0, 0.0)]);
    }

    #[test]
    fn rabi_oscillation_under_a_constant_field() {
        // H = -(bz sz + bx sx); starting in |0>, P1(t) = (bx/b)^2 sin^2(b t)
        let (bx, bz) = (0.6, 0.8);
        let h = HermitianOperator::new(2, vec![c(-bz, 0.0), c(-bx, 0.0), c(-bx, 0.0), c(bz, 0.0)]).unwrap();
        let m = Constant(h);
        let mut psi = QuantumState::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let dt = 1e-3;
        let b: f64 = 1.0;
        for step in 1..=5000 {
            let k1 = schrodinger_rhs(&psi, Vec2::ZERO, &m);
            let add = |p: &QuantumState, k: &[C64], h: f64| {
                QuantumState::from_raw(p.amps().iter().zip(k).map(|(a, k)| a + k * h).collect())
            };
            let k2 = schrodinger_rhs(&add(&psi, &k1, dt / 2.0), Vec2::ZERO, &m);
            let k3 = schrodinger_rhs(&add(&psi, &k2, dt / 2.0), Vec2::ZERO, &m);
            let k4 = schrodinger_rhs(&add(&psi, &k3, dt), Vec2::ZERO, &m);
            let amps = (0..2)
                .map(|j| psi.amps()[j] + (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (dt / 6.0))
                .collect();
            psi = QuantumState::from_raw(amps);
            if step % 1000 == 0 {
                let t = step as f64 * dt;
                let expected = (bx / b).powi(2) * (b * t).sin().powi(2);
                assert!((psi.amps()[1].norm_sqr() - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pure_eigenstate_chart() {
        let f = standard_frame(2);
        let psi = QuantumState::new(vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let aa = to_action_angle(&psi, &f, 2.0).unwrap();
        assert_eq!(aa.actions, vec![2.0, 0.0]);
        assert_eq!(aa.angles, vec![0.0, 0.0]);
    }

    #[test]
    fn equal_superposition_with_quarter_phase() {
        let f = standard_frame(2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let psi = QuantumState::new(vec![c(r, 0.0), c(0.0, r)]).unwrap();
        let hbar = 1.5;
        let aa = to_action_angle(&psi, &f, hbar).unwrap();
        assert!((aa.actions[0] - hbar / 2.0).abs() < 1e-15);
        assert!((aa.actions[1] - hbar / 2.0).abs() < 1e-15);
        assert_eq!(aa.angles[0], 0.0);
        assert!((aa.angles[1] + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_chart_examples() {
        let f = standard_frame(2);
        let hbar = 0.7;
        let psi = from_action_angle(
            &ActionAngleState { actions: vec![hbar, 0.0], angles: vec![0.0, 0.0] },
            &f,
            hbar,
        )
        .unwrap();
        assert_eq!(psi.amps(), &[c(1.0, 0.0), c(0.0, 0.0)]);

        let psi = from_action_angle(
            &ActionAngleState { actions: vec![hbar / 2.0, hbar / 2.0], angles: vec![0.0, PI] },
            &f,
            hbar,
        )
        .unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.amps()[0] - c(r, 0.0)).norm() < 1e-15);
        assert!((psi.amps()[1] - c(-r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn bad_actions_are_rejected() {
        let f = standard_frame(2);
        let neg = ActionAngleState { actions: vec![1.2, -0.2], angles: vec![0.0; 2] };
        assert!(matches!(from_action_angle(&neg, &f, 1.0), Err(Error::BadActions(_))));
        let short = ActionAngleState { actions: vec![0.5, 0.4], angles: vec![0.0; 2] };
        assert!(matches!(from_action_angle(&short, &f, 1.0), Err(Error::BadActions(_))));
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        assert!(QuantumState::new(vec![c(1.0, 0.0), c(0.1, 0.0)]).is_err());
    }

    fn random_unitary_frame(seed: &[f64]) -> EigenFrame {
        // eigenvectors of a random Hermitian 3x3 form a random unitary
        let n = 3;
        let mut data = vec![c(0.0, 0.0); n * n];
        let mut k = 0;
        for i in 0..n {
            data[i * n + i] = c(seed[k] + 3.0 * i as f64, 0.0);
            k += 1;
            for j in i + 1..n {
                let z = c(seed[k], seed[k + 1]);
                k += 2;
                data[i * n + j] = z;
                data[j * n + i] = z.conj();
            }
        }
        eigensystem(&HermitianOperator::new(n, data).unwrap(), &GaugeAnchor::LargestComponent).unwrap()
    }

    proptest! {
        #[test]
        fn norm_is_conserved_by_the_flow(
            re in prop::collection::vec(-1.0..1.0f64, 2),
            im in prop::collection::vec(-1.0..1.0f64, 2),
            x in -3.0..3.0f64,
            y in -3.0..3.0f64,
        ) {
            let (m, _) = crate::model::DipoleSpinModel::scaled(&crate::model::ModelParams::paper()).unwrap();
            let amps: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            prop_assume!(norm_sqr(&amps) > 1e-6);
            let psi = QuantumState::normalized(amps).unwrap();
            let rhs = schrodinger_rhs(&psi, Vec2::new(x, y), &m);
            let re_dot = inner(psi.amps(), &rhs).re;
            prop_assert!(re_dot.abs() < 1e-15);
        }

        #[test]
        fn chart_roundtrip_and_parseval(
            seed in prop::collection::vec(-1.0..1.0f64, 9),
            re in prop::collection::vec(-1.0..1.0f64, 3),
            im in prop::collection::vec(-1.0..1.0f64, 3),
            chi in -3.0..3.0f64,
        ) {
            let f = random_unitary_frame(&seed);
            let amps: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            prop_assume!(norm_sqr(&amps) > 1e-6);
            let psi = QuantumState::normalized(amps).unwrap();
            let hbar = 1.054_571_817;
            let aa = to_action_angle(&psi, &f, hbar).unwrap();
            let sum: f64 = aa.actions.iter().sum();
            prop_assert!((sum - hbar * psi.norm_sqr()).abs() < 1e-12 * hbar);
            let back = from_action_angle(&aa, &f, hbar).unwrap();
            prop_assert!((psi.overlap(&back) - 1.0).abs() < 1e-12);

            // populations and relative phases ignore a global phase
            let bb = to_action_angle(&psi.rephased(chi), &f, hbar).unwrap();
            for n in 0..3 {
                prop_assert!((aa.actions[n] - bb.actions[n]).abs() < 1e-13);
            }
            let rel = |s: &ActionAngleState| wrap_angle(s.angles[1] - s.angles[0]);
            prop_assert!(wrap_angle(rel(&aa) - rel(&bb)).abs() < 1e-9);
        }
    }
}

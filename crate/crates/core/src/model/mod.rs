//! Hybrid-model interface and the magnetic-particle / spin-1/2 example.

mod dipole;
mod eigen;
mod operator;
mod vector;

pub use dipole::{
    dipole_field, spin_hamiltonian, DipoleSpinModel, FieldVector, ModelParams, Scales, SpinBand,
    BOHR_MAGNETON, HBAR_SI,
};
pub use eigen::{
    eigensystem, inner, EigenFrame, GaugeAnchor, DEGENERACY_TOLERANCE, GAUGE_ANCHOR_FLOOR,
};
pub use operator::{HermitianOperator, HERMITIAN_TOLERANCE};
pub use vector::Vec2;

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::geometry;

/// Relative step (in units of [`HybridModel::length_scale`]) for the default
/// finite-difference gradients.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// A fast N-level quantum subsystem whose Hamiltonian depends on the position
/// of a slow classical particle of mass `mass` moving in the plane.
///
/// All quantities are in whatever consistent unit system the implementor
/// chooses. Only [`hamiltonian`](Self::hamiltonian) and the scalar accessors
/// are required; the remaining methods have finite-difference or
/// numerical-geometry defaults that concrete models may replace with closed
/// forms.
pub trait HybridModel: Send + Sync {
    fn dim(&self) -> usize;
    fn hbar(&self) -> f64;
    fn mass(&self) -> f64;
    /// Characteristic length over which the Hamiltonian varies.
    fn length_scale(&self) -> f64;

    fn hamiltonian(&self, q: Vec2) -> HermitianOperator;

    /// Classical potential V2.
    fn potential(&self, _q: Vec2) -> f64 {
        0.0
    }

    fn potential_gradient(&self, q: Vec2) -> Vec2 {
        let h = FD_RELATIVE_STEP * self.length_scale();
        central_gradient(|p| self.potential(p), q, h)
    }

    fn gauge_anchor(&self) -> GaugeAnchor {
        GaugeAnchor::LargestComponent
    }

    fn eigenframe(&self, q: Vec2) -> Result<EigenFrame> {
        eigensystem(&self.hamiltonian(q), &self.gauge_anchor())
    }

    /// `out = H1(q) psi`.
    fn apply_hamiltonian(&self, q: Vec2, psi: &[C64], out: &mut [C64]) {
        self.hamiltonian(q).apply(psi, out);
    }

    /// Gradient of `<psi|H1(q)|psi>` with respect to `q`.
    fn expectation_gradient(&self, q: Vec2, psi: &[C64]) -> Vec2 {
        let h = FD_RELATIVE_STEP * self.length_scale();
        central_gradient(|p| self.hamiltonian(p).expectation(psi), q, h)
    }

    /// Gradients of the band energies, ascending energy order.
    fn band_energy_gradients(&self, q: Vec2) -> Result<Vec<Vec2>> {
        let h = FD_RELATIVE_STEP * self.length_scale();
        let xp = self.eigenframe(q + Vec2::new(h, 0.0))?.energies;
        let xm = self.eigenframe(q - Vec2::new(h, 0.0))?.energies;
        let yp = self.eigenframe(q + Vec2::new(0.0, h))?.energies;
        let ym = self.eigenframe(q - Vec2::new(0.0, h))?.energies;
        Ok((0..self.dim())
            .map(|n| Vec2::new((xp[n] - xm[n]) / (2.0 * h), (yp[n] - ym[n]) / (2.0 * h)))
            .collect())
    }

    /// Population-weighted curvature (z component of curl of the averaged
    /// vector potential) for the given actions.
    fn curvature(&self, q: Vec2, actions: &[f64]) -> Result<f64> {
        geometry::curvature_extrapolated(
            self,
            q,
            actions,
            geometry::DEFAULT_PLAQUETTE * self.length_scale(),
        )
    }
}

/// Back-reaction force `-grad <psi|H1(q)|psi>` on the classical particle.
pub fn mean_field_force<M: HybridModel + ?Sized>(model: &M, psi: &[C64], q: Vec2) -> Vec2 {
    -model.expectation_gradient(q, psi)
}

pub(crate) fn central_gradient<F: Fn(Vec2) -> f64>(f: F, q: Vec2, h: f64) -> Vec2 {
    let dx = (f(q + Vec2::new(h, 0.0)) - f(q - Vec2::new(h, 0.0))) / (2.0 * h);
    let dy = (f(q + Vec2::new(0.0, h)) - f(q - Vec2::new(0.0, h))) / (2.0 * h);
    Vec2::new(dx, dy)
}

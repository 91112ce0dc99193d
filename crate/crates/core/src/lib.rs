//! Hybrid quantum-classical dynamics of a fast N-level quantum system coupled
//! to a slow classical particle in the plane.
//!
//! Two routes to the slow motion are provided: the exact coupled (mean-field)
//! integration in [`fulldyn`], and the adiabatic effective dynamics in
//! [`effective`], where the fast subsystem enters only through its band
//! energies and a Berry-curvature Lorentz-like force. The geometric
//! quantities themselves live in [`geometry`].
//!
//! The concrete model is a magnetic particle moving above a single spin-1/2
//! ([`model::DipoleSpinModel`]). Dynamics run in scaled units (length `d`,
//! energy `|mu| B(0)`, time `hbar / (|mu| B(0))`); [`model::Scales`] converts
//! to SI at the I/O boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod effective;
pub mod error;
pub mod fulldyn;
pub mod geometry;
pub mod io;
pub mod model;
mod ode;
pub mod quantum;

pub use error::{Error, Result};
pub use model::{
    dipole_field, eigensystem, mean_field_force, spin_hamiltonian, DipoleSpinModel, EigenFrame,
    FieldVector, GaugeAnchor, HermitianOperator, HybridModel, ModelParams, Scales, SpinBand, Vec2,
};
pub use quantum::{ActionAngleState, QuantumState};

pub use num_complex::Complex64 as C64;

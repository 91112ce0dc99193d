use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::{GaugeAnchor, HermitianOperator, HybridModel, Vec2};
use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Bohr magneton (J/T).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// Physical parameters of the particle / spin setup, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Dipole strength mu_0 m_F of the moving particle (T m^3). The moment
    /// points along -z.
    #[serde(rename = "mu0_mF")]
    pub mu0_mf: f64,
    /// Spin magnetic moment (J/T), signed.
    pub mu: f64,
    /// Distance from the plane of motion down to the spin (m).
    pub d: f64,
    /// Particle mass (kg).
    pub mass: f64,
    /// Reduced Planck constant (J s).
    pub hbar: f64,
    /// Stiffness of an optional isotropic harmonic trap V2 = k r^2 / 2
    /// (N/m). Not part of the free-particle setup; zero disables it.
    #[serde(default)]
    pub trap_stiffness: f64,
}

impl ModelParams {
    /// The parameter set of the original estimate, with an electron-like
    /// negative spin moment (the sign that admits circular orbits).
    pub fn paper() -> Self {
        Self {
            mu0_mf: 2.0e-21,
            mu: -BOHR_MAGNETON,
            d: 1.0e-6,
            mass: 2.5e-15,
            hbar: HBAR_SI,
            trap_stiffness: 0.0,
        }
    }

    /// Every violated invariant as `(field, message)`.
    pub fn issues(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let finite = [
            ("mu0_mF", self.mu0_mf),
            ("mu", self.mu),
            ("d", self.d),
            ("mass", self.mass),
            ("hbar", self.hbar),
            ("trap_stiffness", self.trap_stiffness),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                out.push((name, format!("must be finite, got {v}")));
            }
        }
        if !(self.d > 0.0) {
            out.push(("d", format!("must be > 0, got {}", self.d)));
        }
        if !(self.mass > 0.0) {
            out.push(("mass", format!("must be > 0, got {}", self.mass)));
        }
        if !(self.hbar > 0.0) {
            out.push(("hbar", format!("must be > 0, got {}", self.hbar)));
        }
        if self.mu0_mf == 0.0 {
            out.push(("mu0_mF", "must be nonzero".to_string()));
        }
        if self.trap_stiffness < 0.0 {
            out.push((
                "trap_stiffness",
                format!("must be >= 0, got {}", self.trap_stiffness),
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                issues
                    .iter()
                    .map(|(f, m)| format!("{f}: {m}"))
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Field magnitude at the spin with the particle on the axis (T).
    pub fn axis_field(&self) -> f64 {
        2.0 * (self.mu0_mf / (4.0 * PI)).abs() / self.d.powi(3)
    }

    /// Copy with the mass chosen so that `omega_fast(0) / omega_slow` equals
    /// `ratio`, where `omega_fast(0) = 2 |mu| B(0) / hbar` and `omega_slow` is
    /// the small-oscillation frequency about the origin.
    pub fn with_timescale_ratio(&self, ratio: f64) -> Result<Self> {
        self.validate()?;
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "timescale ratio must be positive, got {ratio}"
            )));
        }
        if self.mu == 0.0 {
            return Err(Error::InvalidArgument(
                "timescale ratio is undefined for mu = 0".into(),
            ));
        }
        let omega_fast = 2.0 * self.mu.abs() * self.axis_field() / self.hbar;
        let k_grad = 3.75 * self.mu.abs() * self.axis_field() / (self.d * self.d);
        let stiffness = k_grad + self.trap_stiffness;
        let omega_slow = omega_fast / ratio;
        Ok(Self {
            mass: stiffness / (omega_slow * omega_slow),
            ..*self
        })
    }
}

/// Magnetic field at the spin (T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub fn magnitude(&self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()
    }
}

/// Field of the particle's dipole at the spin, with the particle at `(x, y)`
/// in the plane a distance `d` above the spin.
pub fn dipole_field(x: f64, y: f64, params: &ModelParams) -> FieldVector {
    field_raw(params.mu0_mf / (4.0 * PI), params.d, x, y)
}

/// `H1 = -mu B.sigma`.
pub fn spin_hamiltonian(field: &FieldVector, mu: f64) -> HermitianOperator {
    let FieldVector { bx, by, bz } = *field;
    HermitianOperator::from_raw(
        2,
        vec![
            C64::new(-mu * bz, 0.0),
            C64::new(-mu * bx, mu * by),
            C64::new(-mu * bx, -mu * by),
            C64::new(mu * bz, 0.0),
        ],
    )
}

// c = mu0 mF / 4 pi
fn field_raw(c: f64, d: f64, x: f64, y: f64) -> FieldVector {
    let r2 = x * x + y * y;
    let s = d * d + r2;
    let u = 1.0 / (s * s * s.sqrt());
    FieldVector {
        bx: -c * 3.0 * x * d * u,
        by: -c * 3.0 * y * d * u,
        bz: -c * (2.0 * d * d - r2) * u,
    }
}

// rows: Bx, By, Bz; columns: d/dx, d/dy
fn field_jacobian(c: f64, d: f64, x: f64, y: f64) -> [[f64; 2]; 3] {
    let r2 = x * x + y * y;
    let s = d * d + r2;
    let u = 1.0 / (s * s * s.sqrt());
    let w = u / s;
    let cross = 15.0 * c * d * x * y * w;
    let gz = c * (2.0 * u + 5.0 * (2.0 * d * d - r2) * w);
    [
        [-3.0 * c * d * (u - 5.0 * x * x * w), cross],
        [cross, -3.0 * c * d * (u - 5.0 * y * y * w)],
        [x * gz, y * gz],
    ]
}

/// Which spin eigenstate: `Plus` is aligned with the local field
/// (`B.sigma = +|B|`), with energy `-mu |B|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpinBand {
    Plus,
    Minus,
}

/// Unit system of a scaled model, expressed in SI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scales {
    pub length: f64,
    pub energy: f64,
    pub time: f64,
    pub mass: f64,
    pub momentum: f64,
    pub velocity: f64,
    pub force: f64,
    pub action: f64,
    pub curvature: f64,
    pub field: f64,
    pub stiffness: f64,
}

impl Scales {
    pub fn identity() -> Self {
        Self {
            length: 1.0,
            energy: 1.0,
            time: 1.0,
            mass: 1.0,
            momentum: 1.0,
            velocity: 1.0,
            force: 1.0,
            action: 1.0,
            curvature: 1.0,
            field: 1.0,
            stiffness: 1.0,
        }
    }

    /// Length `d`, energy `|mu| B(0)` and action `hbar`. For `mu = 0` the
    /// energy unit falls back to `mu_B B(0)`.
    pub fn for_params(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        let field = p.axis_field();
        let energy = if p.mu != 0.0 {
            p.mu.abs() * field
        } else {
            BOHR_MAGNETON * field
        };
        let time = p.hbar / energy;
        Ok(Self {
            length: p.d,
            energy,
            time,
            mass: p.hbar * p.hbar / (energy * p.d * p.d),
            momentum: p.hbar / p.d,
            velocity: p.d / time,
            force: energy / p.d,
            action: p.hbar,
            curvature: p.hbar / (p.d * p.d),
            field,
            stiffness: energy / (p.d * p.d),
        })
    }

    /// Frequency unit (1/s).
    pub fn frequency(&self) -> f64 {
        1.0 / self.time
    }
}

/// The magnetic particle above a spin-1/2, in whatever unit system its
/// coefficients were given in (see [`DipoleSpinModel::scaled`]).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleSpinModel {
    /// mu0 mF / 4 pi
    coeff: f64,
    mu: f64,
    d: f64,
    mass: f64,
    hbar: f64,
    trap: f64,
}

impl DipoleSpinModel {
    /// Model with the coefficients taken as given (SI for SI params).
    pub fn from_params(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            coeff: p.mu0_mf / (4.0 * PI),
            mu: p.mu,
            d: p.d,
            mass: p.mass,
            hbar: p.hbar,
            trap: p.trap_stiffness,
        })
    }

    /// Model in scaled units (`d = hbar = 1`, `|mu| B(0) = 1`), together with
    /// the SI value of each unit.
    pub fn scaled(p: &ModelParams) -> Result<(Self, Scales)> {
        let scales = Scales::for_params(p)?;
        let mu = if p.mu != 0.0 {
            p.mu.signum()
        } else {
            0.0
        };
        let model = Self {
            coeff: 0.5_f64.copysign(p.mu0_mf),
            mu,
            d: 1.0,
            mass: p.mass / scales.mass,
            hbar: 1.0,
            trap: p.trap_stiffness / scales.stiffness,
        };
        Ok((model, scales))
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn trap_stiffness(&self) -> f64 {
        self.trap
    }

    /// +1 when the particle's field at the spin points along -z on the axis.
    fn field_sign(&self) -> f64 {
        self.coeff.signum()
    }

    pub fn field(&self, q: Vec2) -> FieldVector {
        field_raw(self.coeff, self.d, q.x, q.y)
    }

    /// `|B|` from the simplified closed form
    /// `|c| sqrt(4 d^2 + r^2) / (d^2 + r^2)^2`.
    pub fn field_magnitude(&self, q: Vec2) -> f64 {
        let r2 = q.norm_sqr();
        let s = self.d * self.d + r2;
        self.coeff.abs() * (4.0 * self.d * self.d + r2).sqrt() / (s * s)
    }

    /// Gradient of `|B|`, radial.
    pub fn field_magnitude_gradient(&self, q: Vec2) -> Vec2 {
        let r2 = q.norm_sqr();
        let d2 = self.d * self.d;
        let s = d2 + r2;
        let g = -3.0 * self.coeff.abs() * (5.0 * d2 + r2) / ((4.0 * d2 + r2).sqrt() * s * s * s);
        q * g
    }

    /// Position index (ascending energy) of a spin band.
    pub fn band_index(&self, band: SpinBand) -> usize {
        match (band, self.mu < 0.0) {
            (SpinBand::Plus, false) | (SpinBand::Minus, true) => 0,
            _ => 1,
        }
    }

    /// Actions (ascending-energy order) for the given populations of
    /// `|+>` and `|->`.
    pub fn actions_from_populations(&self, plus: f64, minus: f64) -> Vec<f64> {
        let mut a = vec![0.0; 2];
        a[self.band_index(SpinBand::Plus)] = self.hbar * plus;
        a[self.band_index(SpinBand::Minus)] = self.hbar * minus;
        a
    }

    /// `|a+|^2 - |a-|^2` from actions in ascending-energy order.
    pub fn population_imbalance(&self, actions: &[f64]) -> f64 {
        (actions[self.band_index(SpinBand::Plus)] - actions[self.band_index(SpinBand::Minus)])
            / self.hbar
    }

    /// Closed-form curvature for population imbalance `|a+|^2 - |a-|^2`.
    pub fn curvature_closed_form(&self, q: Vec2, imbalance: f64) -> f64 {
        let r2 = q.norm_sqr();
        let d2 = self.d * self.d;
        let denom = ((r2 + d2) * (r2 + 4.0 * d2)).powf(1.5);
        self.field_sign() * 9.0 * self.hbar * d2 * (r2 + 2.0 * d2) / (2.0 * denom) * imbalance
    }

    /// Closed-form Berry connection of a band under this model's gauge
    /// anchors: `A+ = cos^2(theta/2) grad phi = -A-`, with `(theta, phi)` the
    /// polar angles of the field direction.
    pub fn connection_closed_form(&self, q: Vec2, band: SpinBand) -> Vec2 {
        let r2 = q.norm_sqr();
        if r2 == 0.0 {
            return Vec2::ZERO;
        }
        let b = self.field(q);
        let n_z = b.bz / b.magnitude();
        // grad phi of the field direction equals grad of the particle's polar angle
        let grad_phi = Vec2::new(-q.y, q.x) * (1.0 / r2);
        let sign = self.field_sign();
        // anchored component stays nonzero at the axis: cos^2 for field along -z
        let weight = 0.5 * (1.0 + sign * n_z);
        let a_plus = grad_phi * (sign * weight);
        match band {
            SpinBand::Plus => a_plus,
            SpinBand::Minus => -a_plus,
        }
    }

    /// Larmor angular frequency `2 |mu| |B(q)| / hbar`.
    pub fn fast_frequency(&self, q: Vec2) -> f64 {
        2.0 * self.mu.abs() * self.field_magnitude(q) / self.hbar
    }

    /// Curvature of the ground-band energy at the origin, `(15/4) |mu| B(0)/d^2`.
    pub fn gradient_stiffness(&self) -> f64 {
        7.5 * self.mu.abs() * self.coeff.abs() / self.d.powi(5)
    }

    /// Small-oscillation angular frequency about the origin for a particle in
    /// the ground band.
    pub fn slow_frequency(&self) -> f64 {
        ((self.gradient_stiffness() + self.trap) / self.mass).sqrt()
    }

    pub fn slow_period(&self) -> f64 {
        2.0 * PI / self.slow_frequency()
    }

    pub fn timescale_ratio(&self) -> f64 {
        self.fast_frequency(Vec2::ZERO) / self.slow_frequency()
    }
}

impl HybridModel for DipoleSpinModel {
    fn dim(&self) -> usize {
        2
    }

    fn hbar(&self) -> f64 {
        self.hbar
    }

    fn mass(&self) -> f64 {
        self.mass
    }

    fn length_scale(&self) -> f64 {
        self.d
    }

    fn hamiltonian(&self, q: Vec2) -> HermitianOperator {
        spin_hamiltonian(&self.field(q), self.mu)
    }

    fn potential(&self, q: Vec2) -> f64 {
        0.5 * self.trap * q.norm_sqr()
    }

    fn potential_gradient(&self, q: Vec2) -> Vec2 {
        q * self.trap
    }

    /// Per band, the component that is largest where the field is
    /// anti-parallel to the moment's axis; smooth except where the field
    /// direction reaches the opposite pole, which the dipole field never does.
    fn gauge_anchor(&self) -> GaugeAnchor {
        let (plus, minus) = if self.field_sign() >= 0.0 { (1, 0) } else { (0, 1) };
        let mut anchors = vec![0; 2];
        anchors[self.band_index(SpinBand::Plus)] = plus;
        anchors[self.band_index(SpinBand::Minus)] = minus;
        GaugeAnchor::Fixed(anchors)
    }

    fn apply_hamiltonian(&self, q: Vec2, psi: &[C64], out: &mut [C64]) {
        let b = self.field(q);
        let m = -self.mu;
        let off_lo = C64::new(b.bx, b.by) * m; // H10
        let off_hi = C64::new(b.bx, -b.by) * m; // H01
        out[0] = psi[0] * (m * b.bz) + off_hi * psi[1];
        out[1] = off_lo * psi[0] - psi[1] * (m * b.bz);
    }

    fn expectation_gradient(&self, q: Vec2, psi: &[C64]) -> Vec2 {
        let j = field_jacobian(self.coeff, self.d, q.x, q.y);
        let c01 = psi[0].conj() * psi[1];
        let s = [
            2.0 * c01.re,
            2.0 * c01.im,
            psi[0].norm_sqr() - psi[1].norm_sqr(),
        ];
        let gx = s[0] * j[0][0] + s[1] * j[1][0] + s[2] * j[2][0];
        let gy = s[0] * j[0][1] + s[1] * j[1][1] + s[2] * j[2][1];
        Vec2::new(gx, gy) * (-self.mu)
    }

    fn band_energy_gradients(&self, q: Vec2) -> Result<Vec<Vec2>> {
        let g = self.field_magnitude_gradient(q) * self.mu.abs();
        Ok(vec![-g, g])
    }

    fn curvature(&self, q: Vec2, actions: &[f64]) -> Result<f64> {
        if actions.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: actions.len(),
            });
        }
        Ok(self.curvature_closed_form(q, self.population_imbalance(actions)))
    }
}

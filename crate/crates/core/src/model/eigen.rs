use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::operator::HermitianOperator;
use crate::error::{Error, Result};

/// Relative eigenvalue gap below which the instantaneous eigenbasis is
/// considered undefined.
pub const DEGENERACY_TOLERANCE: f64 = 1e-12;

/// Smallest admissible magnitude of the component used to fix an
/// eigenvector's phase.
pub const GAUGE_ANCHOR_FLOOR: f64 = 1e-10;


/// Phase convention for eigenvectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeAnchor {
    /// The component of largest magnitude is made real and positive.
    LargestComponent,
    /// Band `n` (ascending energy order) has component `anchors[n]` real and
    /// positive. Smooth wherever that component stays away from zero.
    Fixed(Vec<usize>),
}

impl GaugeAnchor {
    fn component(&self, band: usize, v: &[C64]) -> usize {
        match self {
            GaugeAnchor::LargestComponent => {
                let mut best = 0;
                let mut best_mag = -1.0;
                for (k, z) in v.iter().enumerate() {
                    // strict comparison keeps the lowest index on ties
                    if z.norm_sqr() > best_mag {
                        best_mag = z.norm_sqr();
                        best = k;
                    }
                }
                best
            }
            GaugeAnchor::Fixed(anchors) => anchors[band],
        }
    }
}

/// Instantaneous eigenvalues (ascending) and gauge-fixed eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenFrame {
    pub energies: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub gauge_anchor: GaugeAnchor,
}

impl EigenFrame {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `<phi_n|psi>` for every band.
    pub fn project(&self, psi: &[C64]) -> Vec<C64> {
        self.states.iter().map(|phi| inner(phi, psi)).collect()
    }

    /// Smallest gap between adjacent levels.
    pub fn min_gap(&self) -> f64 {
        self.energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// `<a|b>`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Diagonalize a Hermitian operator. N = 2 uses the closed form; larger N a
/// a dense Hermitian eigensolver. Output is deterministic in its input.
pub fn eigensystem(h: &HermitianOperator, anchor: &GaugeAnchor) -> Result<EigenFrame> {
    let n = h.dim();
    if let GaugeAnchor::Fixed(a) = anchor {
        if a.len() != n || a.iter().any(|&k| k >= n) {
            return Err(Error::InvalidArgument(format!(
                "gauge anchor {a:?} does not fit dimension {n}"
            )));
        }
    }
    let (energies, mut states) = match n {
        0 => return Err(Error::InvalidArgument("empty operator".into())),
        1 => (vec![h.get(0, 0).re], vec![vec![C64::new(1.0, 0.0)]]),
        2 => closed_form_2x2(h),
        _ => general(h),
    };

    let scale = energies.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if n > 1 {
        let gap = energies
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let tolerance = DEGENERACY_TOLERANCE * scale;
        if !(gap > tolerance) {
            return Err(Error::Degenerate { gap, tolerance });
        }
    }

    for (band, v) in states.iter_mut().enumerate() {
        let k = anchor.component(band, v);
        let magnitude = v[k].norm();
        if !(magnitude >= GAUGE_ANCHOR_FLOOR) {
            return Err(Error::GaugeSingular { band, magnitude });
        }
        let phase = v[k].conj() / magnitude;
        for z in v.iter_mut() {
            *z *= phase;
        }
        v[k] = C64::new(v[k].re, 0.0);
    }

    Ok(EigenFrame {
        energies,
        states,
        gauge_anchor: anchor.clone(),
    })
}

fn closed_form_2x2(h: &HermitianOperator) -> (Vec<f64>, Vec<Vec<C64>>) {
    let h00 = h.get(0, 0).re;
    let h11 = h.get(1, 1).re;
    let h01 = h.get(0, 1);
    // H = h0 I + hx sx + hy sy + hz sz
    let h0 = 0.5 * (h00 + h11);
    let hz = 0.5 * (h00 - h11);
    let (hx, hy) = (h01.re, -h01.im);
    let hn = (hx * hx + hy * hy + hz * hz).sqrt();

    // +1 eigenvector of h.sigma, using whichever representation avoids cancellation
    let upper = if hz <= 0.0 {
        [C64::new(hx, -hy), C64::new(hn - hz, 0.0)]
    } else {
        [C64::new(hn + hz, 0.0), C64::new(hx, hy)]
    };
    let lower = if hz >= 0.0 {
        [C64::new(-hx, hy), C64::new(hn + hz, 0.0)]
    } else {
        [C64::new(hn - hz, 0.0), C64::new(-hx, -hy)]
    };
    let normalize = |v: [C64; 2]| -> Vec<C64> {
        let norm = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if norm > 0.0 {
            vec![v[0] / norm, v[1] / norm]
        } else {
            vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
        }
    };
    let mut low = normalize(lower);
    let mut high = normalize(upper);
    if hn == 0.0 {
        // H proportional to identity; any basis will do, the gap check rejects it
        low = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        high = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    }
    (vec![h0 - hn, h0 + hn], vec![low, high])
}

fn general(h: &HermitianOperator) -> (Vec<f64>, Vec<Vec<C64>>) {
    let n = h.dim();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, h.entries()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let energies = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let states = order.iter().map(|&j| eig.eigenvectors.column(j).iter().copied().collect()).collect();
    (energies, states)
}

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance for the Hermiticity check on construction.
pub const HERMITIAN_TOLERANCE: f64 = 1e-14;

/// Dense N x N Hermitian matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    dim: usize,
    data: Vec<C64>,
}

impl HermitianOperator {
    /// Build from row-major entries, checking Hermiticity to
    /// [`HERMITIAN_TOLERANCE`] relative to the largest entry.
    pub fn new(dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let op = Self { dim, data };
        let scale = op.data.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut deviation: f64 = 0.0;
        for i in 0..dim {
            for j in i..dim {
                deviation = deviation.max((op.get(i, j) - op.get(j, i).conj()).norm());
            }
        }
        if !deviation.is_finite() || deviation > HERMITIAN_TOLERANCE * scale {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(op)
    }

    /// Build without checks. The caller guarantees exact Hermiticity.
    pub(crate) fn from_raw(dim: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = C64::new(d, 0.0);
        }
        Self { dim: n, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    /// `out = H v`.
    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.data[i * n..(i + 1) * n];
            *o = row.iter().zip(v).map(|(h, x)| h * x).sum();
        }
    }

    pub fn apply_vec(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        self.apply(v, &mut out);
        out
    }

    /// `<v|H|v>`, real for Hermitian H.
    pub fn expectation(&self, v: &[C64]) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let hv: C64 = row.iter().zip(v).map(|(h, x)| h * x).sum();
            acc += (v[i].conj() * hv).re;
        }
        acc
    }

    /// Frobenius norm; bounds the spectral norm from above.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    /// Complex conjugate (equal to the transpose for Hermitian matrices).
    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }
}

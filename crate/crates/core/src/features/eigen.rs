//! Eigenvalues of small Hermitian matrices by cyclic Jacobi rotations.
//!
//! A Hermitian `H = A + iB` is embedded in the real symmetric matrix
//! `[[A, -B], [B, A]]`, whose spectrum is the spectrum of `H` with every
//! eigenvalue doubled. The real matrix is diagonalised with cyclic Jacobi sweeps
//! and every second eigenvalue of the sorted result is kept.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance for the Hermitian symmetry check.
pub const HERMITIAN_TOLERANCE: f64 = 1e-9;
/// Sweeps stop once the off-diagonal Frobenius norm falls below this fraction
/// of the full Frobenius norm.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix must be square"));
        }
        Ok(Self {
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_real(rows: &[&[f64]]) -> Result<Self> {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&v| Complex64::new(v, 0.0)).collect())
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let tol = rel_tol * scale;
        (0..self.dim).all(|i| {
            (i..self.dim).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol)
        })
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Eigenvalues of a real symmetric matrix (row-major, `n × n`), unsorted.
/// The input is overwritten.
pub fn jacobi_symmetric(a: &mut [f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * n);
    let total: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..MAX_SWEEPS {
        if off_norm(a) <= JACOBI_TOLERANCE * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // A <- Jᵀ A J on rows/columns p and q
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Real eigenvalues of a Hermitian matrix, sorted descending.
pub fn eigenvalues_hermitian(h: &ComplexMatrix) -> Result<Vec<f64>> {
    if !h.is_hermitian(HERMITIAN_TOLERANCE) {
        return Err(Error::invalid("matrix is not Hermitian"));
    }
    let l = h.dim();
    if l == 0 {
        return Ok(Vec::new());
    }
    let n = 2 * l;
    let mut real = vec![0.0; n * n];
    for i in 0..l {
        for j in 0..l {
            // symmetrise: average H_ij with conj(H_ji)
            let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            real[i * n + j] = v.re;
            real[(i + l) * n + (j + l)] = v.re;
            real[i * n + (j + l)] = -v.im;
            real[(i + l) * n + j] = v.im;
        }
    }
    let mut eigs = jacobi_symmetric(&mut real, n);
    eigs.sort_by(|a, b| b.total_cmp(a));
    Ok(eigs.into_iter().step_by(2).collect())
}

//! Dense helpers on top of nalgebra used across the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};

/// Scale-aware PSD tolerance: `1e-10 * trace`, floored for all-zero matrices.
pub fn psd_tolerance(m: &DMatrix<f64>) -> f64 {
    1e-10 * m.trace().abs().max(1e-300)
}

/// Symmetrize in place, `(A + A^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    m.is_square() && min_eigenvalue(m) >= -psd_tolerance(m)
}

/// Log-determinant of a symmetric positive definite matrix via Cholesky.
pub fn spd_logdet(m: &DMatrix<f64>) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| domain("matrix is not positive definite"))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(m.clone())
        .ok_or_else(|| domain("matrix is not positive definite"))?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Lower Cholesky factor of a PSD matrix, adding a tiny jitter when it is
/// only semidefinite.
pub fn psd_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let scale = (m.trace().abs() / n.max(1) as f64).max(1.0);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let shifted = m + DMatrix::identity(n, n) * jitter;
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            return Ok(chol.l());
        }
        jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 100.0 };
    }
    Err(domain("matrix is not positive semidefinite"))
}

/// Sign and log of |det| for a general square matrix via LU.
pub fn signed_logdet(m: &DMatrix<f64>) -> (f64, f64) {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut sign = if lu.p().determinant::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut log_abs = 0.0;
    for d in u.diagonal().iter() {
        if *d == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if *d < 0.0 {
            sign = -sign;
        }
        log_abs += d.abs().ln();
    }
    (sign, log_abs)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues clamped at zero.
#[derive(Debug, Clone)]
pub struct PsdSpectrum {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl PsdSpectrum {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Shape(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let mut sym = m.clone();
        symmetrize(&mut sym);
        let tol = psd_tolerance(&sym);
        let eig = SymmetricEigen::new(sym);
        if eig.eigenvalues.iter().any(|&v| v < -tol) {
            return Err(domain("covariance matrix is not positive semidefinite"));
        }
        Ok(Self {
            eigenvalues: eig.eigenvalues.map(|v| v.max(0.0)),
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Projections `Q^T v` of a vector onto the eigenbasis.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        self.eigenvectors.tr_mul(v)
    }
}

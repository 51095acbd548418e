//! Log-MGF of the Gaussian quadratic form `Q(I) = I^T E I + e^T I + e0`,
//! `I ~ N(0, Sigma)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{shape, Error, Result};
use crate::linalg::{is_psd, psd_cholesky, PsdSpectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub e_mat: DMatrix<f64>,
    pub e_vec: DVector<f64>,
    pub e0: f64,
    pub sigma: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(e_mat: DMatrix<f64>, e_vec: DVector<f64>, e0: f64, sigma: DMatrix<f64>) -> Result<Self> {
        let k = e_vec.len();
        if e_mat.shape() != (k, k) || sigma.shape() != (k, k) {
            return Err(shape(format!("quadratic form of size {k} needs {k}x{k} E and Sigma")));
        }
        let asym = (&e_mat - e_mat.transpose()).abs().max();
        if asym > 1e-12 * e_mat.abs().max().max(1.0) {
            return Err(Error::Domain("E must be symmetric".into()));
        }
        if !is_psd(&sigma) {
            return Err(Error::Domain("Sigma must be positive semidefinite".into()));
        }
        Ok(Self { e_mat, e_vec, e0, sigma })
    }

    pub fn dim(&self) -> usize {
        self.e_vec.len()
    }

    /// Eigenvalues of `Sigma^1/2 E Sigma^1/2`, which share their spectrum
    /// with `E Sigma`.
    pub fn effective_eigenvalues(&self) -> DVector<f64> {
        let spec = PsdSpectrum::new(&self.sigma).expect("Sigma checked PSD");
        let root = &spec.eigenvectors
            * DMatrix::from_diagonal(&spec.eigenvalues.map(f64::sqrt))
            * spec.eigenvectors.transpose();
        let b = &root * &self.e_mat * &root;
        let mut sym = b.clone();
        crate::linalg::symmetrize(&mut sym);
        sym.symmetric_eigen().eigenvalues
    }

    /// Largest `lambda` for which the MGF exists (`+inf` if `E Sigma` has no
    /// positive eigenvalue).
    pub fn lambda_max(&self) -> f64 {
        let top = self.effective_eigenvalues().max();
        if top > 0.0 {
            1.0 / (2.0 * top)
        } else {
            f64::INFINITY
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> f64 {
        (&self.e_mat * x).dot(x) + self.e_vec.dot(x) + self.e0
    }
}

/// `log E[exp(lambda Q(I))]`:
///
/// ```text
/// -1/2 log|I - 2 lambda E Sigma| + 1/2 (lambda e)^T (I - 2 lambda Sigma E)^-1 Sigma (lambda e) + lambda e0
/// ```
///
/// Undefined unless every eigenvalue of `I - 2 lambda E Sigma` is positive.
pub fn qfg_mgf(q: &QuadraticForm, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let k = q.dim();
    let mu = q.effective_eigenvalues();
    let worst = mu.iter().map(|m| 1.0 - 2.0 * lambda * m).fold(f64::INFINITY, f64::min);
    if worst <= 0.0 {
        return Err(Error::MgfUndefined(format!(
            "I - 2 lambda E Sigma is not positive definite at lambda = {lambda} (smallest eigenvalue {worst})"
        )));
    }
    let logdet: f64 = mu.iter().map(|m| (-2.0 * lambda * m).ln_1p()).sum();
    let a = DMatrix::identity(k, k) - &q.sigma * &q.e_mat * (2.0 * lambda);
    let le = &q.e_vec * lambda;
    let x = a
        .lu()
        .solve(&(&q.sigma * &le))
        .ok_or_else(|| Error::MgfUndefined("I - 2 lambda Sigma E is singular".into()))?;
    Ok(-0.5 * logdet + 0.5 * le.dot(&x) + lambda * q.e0)
}

/// Monte Carlo estimate of `log E[exp(lambda Q(I))]` and the relative
/// standard error of the underlying mean.
pub fn monte_carlo_mgf(q: &QuadraticForm, lambda: f64, num_samples: usize, seed: u64) -> Result<(f64, f64)> {
    if num_samples < 2 {
        return Err(Error::Validation("monte carlo needs at least 2 samples".into()));
    }
    let l = psd_cholesky(&q.sigma)?;
    let k = q.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = DVector::zeros(k);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..num_samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let x = &l * &z;
        let v = (lambda * q.evaluate(&x)).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = num_samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok((mean.ln(), (var / n).sqrt() / mean))
}

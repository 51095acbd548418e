//! Sparse-spectrum trigonometric features for a single GP layer.
//!
//! Feature `m` at input `x` is
//!
//! ```text
//! phi_m(x) = sqrt(2 sigma_power^2 / M) * cos(w_m^T (x - u_m) + b_m),
//! w_m      = z_m / l + 2 pi p        (elementwise in the input dimension)
//! ```
//!
//! where `l` holds the lengthscales and `p` the spectral mean shift. The
//! stored `spectral_mean` is the vector `p` that enters the cosine directly;
//! the reciprocal convention (`p_q = 1 / p'_q`) is applied by whoever loads
//! raw values, never here.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, shape, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLayerHyper {
    pub num_features: usize,
    pub sigma_power: f64,
    pub lengthscales: DVector<f64>,
    pub spectral_mean: DVector<f64>,
    /// `M x Q` shifts, row `m` is `u_m`.
    pub shifts: DMatrix<f64>,
    /// Phases `b_m` in `[0, 2 pi)`.
    pub phases: DVector<f64>,
    pub sigma_noise: f64,
}

impl SpectralLayerHyper {
    /// Defaults for an `M`-feature layer over `input_dim` inputs: unit
    /// amplitude and lengthscales, zero spectral mean and shifts, the given
    /// phases.
    pub fn with_phases(input_dim: usize, phases: DVector<f64>, sigma_noise: f64) -> Result<Self> {
        let m = phases.len();
        let hyper = Self {
            num_features: m,
            sigma_power: 1.0,
            lengthscales: DVector::from_element(input_dim, 1.0),
            spectral_mean: DVector::zeros(input_dim),
            shifts: DMatrix::zeros(m, input_dim),
            phases,
            sigma_noise,
        };
        hyper.validate()?;
        Ok(hyper)
    }

    pub fn input_dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Feature amplitude `sqrt(2 sigma_power^2 / M)`.
    pub fn amplitude(&self) -> f64 {
        (2.0 * self.sigma_power * self.sigma_power / self.num_features as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.input_dim();
        let m = self.num_features;
        if m == 0 {
            return Err(domain("num_features must be at least 1"));
        }
        if !(self.sigma_power > 0.0 && self.sigma_power.is_finite()) {
            return Err(domain("sigma_power must be positive"));
        }
        if !(self.sigma_noise > 0.0 && self.sigma_noise.is_finite()) {
            return Err(domain("sigma_noise must be positive"));
        }
        if self.lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(domain("lengthscales must be positive"));
        }
        if self.spectral_mean.len() != q {
            return Err(shape(format!(
                "spectral_mean has length {}, expected {q}",
                self.spectral_mean.len()
            )));
        }
        if self.shifts.shape() != (m, q) {
            return Err(shape(format!(
                "shifts are {:?}, expected ({m}, {q})",
                self.shifts.shape()
            )));
        }
        if self.phases.len() != m {
            return Err(shape(format!("phases have length {}, expected {m}", self.phases.len())));
        }
        if self.phases.iter().any(|&b| !(0.0..TAU).contains(&b)) {
            return Err(domain("phases must lie in [0, 2 pi)"));
        }
        Ok(())
    }

    /// Wrap all phases back into `[0, 2 pi)`.
    pub fn wrap_phases(&mut self) {
        for b in self.phases.iter_mut() {
            *b = b.rem_euclid(TAU);
            if *b >= TAU {
                *b = 0.0;
            }
        }
    }

    /// Frequency mean and variance of `w_m` when `z_m ~ N(mean, diag(var))`.
    pub fn frequency_moments(
        &self,
        point_mean: &DMatrix<f64>,
        point_var: Option<&DMatrix<f64>>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, q) = point_mean.shape();
        let mut nu = DMatrix::zeros(m, q);
        let mut beta = DMatrix::zeros(m, q);
        for j in 0..q {
            let l = self.lengthscales[j];
            let shift = TAU * self.spectral_mean[j];
            for i in 0..m {
                nu[(i, j)] = point_mean[(i, j)] / l + shift;
                if let Some(v) = point_var {
                    beta[(i, j)] = v[(i, j)] / (l * l);
                }
            }
        }
        (nu, beta)
    }
}

/// Spectral points `Z`, one row per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoints(pub DMatrix<f64>);

impl SpectralPoints {
    pub fn new(z: DMatrix<f64>, hyper: &SpectralLayerHyper) -> Result<Self> {
        if z.shape() != (hyper.num_features, hyper.input_dim()) {
            return Err(shape(format!(
                "spectral points are {:?}, expected ({}, {})",
                z.shape(),
                hyper.num_features,
                hyper.input_dim()
            )));
        }
        Ok(Self(z))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn check_dims(z: &SpectralPoints, hyper: &SpectralLayerHyper) -> Result<()> {
    hyper.validate()?;
    if z.0.shape() != (hyper.num_features, hyper.input_dim()) {
        return Err(shape(format!(
            "spectral points are {:?}, expected ({}, {})",
            z.0.shape(),
            hyper.num_features,
            hyper.input_dim()
        )));
    }
    Ok(())
}

fn features_into(x: &[f64], z: &DMatrix<f64>, hyper: &SpectralLayerHyper, out: &mut [f64]) {
    let amp = hyper.amplitude();
    let q = hyper.input_dim();
    for (m, o) in out.iter_mut().enumerate() {
        let mut arg = hyper.phases[m];
        for j in 0..q {
            let w = z[(m, j)] / hyper.lengthscales[j] + TAU * hyper.spectral_mean[j];
            arg += w * (x[j] - hyper.shifts[(m, j)]);
        }
        *o = amp * arg.cos();
    }
}

/// `phi(x, Z)` for one input.
pub fn feature_vector(
    x: &DVector<f64>,
    z: &SpectralPoints,
    hyper: &SpectralLayerHyper,
) -> Result<DVector<f64>> {
    check_dims(z, hyper)?;
    if x.len() != hyper.input_dim() {
        return Err(shape(format!(
            "input has length {}, expected {}",
            x.len(),
            hyper.input_dim()
        )));
    }
    let mut out = DVector::zeros(hyper.num_features);
    features_into(x.as_slice(), &z.0, hyper, out.as_mut_slice());
    Ok(out)
}

/// `Phi`: one feature row per input row.
pub fn feature_matrix(
    x: &DMatrix<f64>,
    z: &SpectralPoints,
    hyper: &SpectralLayerHyper,
) -> Result<DMatrix<f64>> {
    check_dims(z, hyper)?;
    let (k, q) = x.shape();
    if k == 0 {
        return Err(shape("feature_matrix needs at least one input row"));
    }
    if q != hyper.input_dim() {
        return Err(shape(format!("inputs have {q} columns, expected {}", hyper.input_dim())));
    }
    let m = hyper.num_features;
    let mut phi = DMatrix::zeros(k, m);
    let mut row = vec![0.0; q];
    let mut buf = vec![0.0; m];
    for r in 0..k {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(r, j)];
        }
        features_into(&row, &z.0, hyper, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            phi[(r, c)] = *v;
        }
    }
    Ok(phi)
}

/// Approximate Gram matrix `Phi Phi^T`.
pub fn kernel_approx(
    x: &DMatrix<f64>,
    z: &SpectralPoints,
    hyper: &SpectralLayerHyper,
) -> Result<DMatrix<f64>> {
    let phi = feature_matrix(x, z, hyper)?;
    Ok(&phi * phi.transpose())
}

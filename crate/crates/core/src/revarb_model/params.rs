//! Flat unconstrained parameter vector of a [`DeepModel`].
//!
//! Per layer, in order: `log sigma_power`, `log l`, `p`, shifts `U`,
//! phases `b`, `log sigma_noise`, spectral points `Z` (SS) or spectral means
//! `alpha` and `log beta` (VSS), weight mean `m`, lower triangle of the
//! Cholesky factor of `s`. Then per hidden layer: latent means and log
//! latent variances.

use nalgebra::{DMatrix, DVector};

use super::{DeepModel, Mode};
use crate::error::{shape, Result};
use crate::linalg::psd_cholesky;

#[derive(Debug, Clone)]
pub(crate) struct LayerVec {
    pub log_sigma_power: f64,
    pub log_lengthscales: DVector<f64>,
    pub spectral_mean: DVector<f64>,
    pub shifts: DMatrix<f64>,
    pub phases: DVector<f64>,
    pub log_sigma_noise: f64,
    pub spectral_means: DMatrix<f64>,
    pub log_spectral_vars: Option<DMatrix<f64>>,
    pub weight_mean: DVector<f64>,
    pub weight_chol: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ModelVec {
    pub layers: Vec<LayerVec>,
    pub latent_means: Vec<DVector<f64>>,
    pub latent_log_vars: Vec<DVector<f64>>,
}

impl ModelVec {
    pub fn from_model(model: &DeepModel) -> Result<Self> {
        let mut layers = Vec::with_capacity(model.layers.len());
        for layer in &model.layers {
            let h = &layer.hyper;
            let p = &layer.params;
            let (spectral_means, log_spectral_vars) = match model.mode {
                Mode::Ss => (layer.points.0.clone(), None),
                Mode::Vss => (p.spectral_means.clone(), Some(p.spectral_vars.map(f64::ln))),
            };
            layers.push(LayerVec {
                log_sigma_power: h.sigma_power.ln(),
                log_lengthscales: h.lengthscales.map(f64::ln),
                spectral_mean: h.spectral_mean.clone(),
                shifts: h.shifts.clone(),
                phases: h.phases.clone(),
                log_sigma_noise: h.sigma_noise.ln(),
                spectral_means,
                log_spectral_vars,
                weight_mean: p.weight_mean.clone(),
                weight_chol: psd_cholesky(&p.weight_cov)?,
            });
        }
        Ok(Self {
            layers,
            latent_means: model.latents.iter().map(|l| l.means.clone()).collect(),
            latent_log_vars: model.latents.iter().map(|l| l.vars.map(f64::ln)).collect(),
        })
    }

    pub fn zeros_like(other: &Self) -> Self {
        let mut z = other.clone();
        z.visit_mut(|v| *v = 0.0);
        z
    }

    fn visit_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            f(&mut l.log_sigma_power);
            l.log_lengthscales.iter_mut().for_each(&mut f);
            l.spectral_mean.iter_mut().for_each(&mut f);
            l.shifts.iter_mut().for_each(&mut f);
            l.phases.iter_mut().for_each(&mut f);
            f(&mut l.log_sigma_noise);
            l.spectral_means.iter_mut().for_each(&mut f);
            if let Some(v) = l.log_spectral_vars.as_mut() {
                v.iter_mut().for_each(&mut f);
            }
            l.weight_mean.iter_mut().for_each(&mut f);
            let m = l.weight_chol.nrows();
            for c in 0..m {
                for r in c..m {
                    f(&mut l.weight_chol[(r, c)]);
                }
            }
        }
        for v in &mut self.latent_means {
            v.iter_mut().for_each(&mut f);
        }
        for v in &mut self.latent_log_vars {
            v.iter_mut().for_each(&mut f);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut copy = self.clone();
        copy.visit_mut(|v| out.push(*v));
        out
    }

    fn fill(&mut self, flat: &[f64]) -> Result<()> {
        let mut count = 0;
        self.visit_mut(|_| count += 1);
        if count != flat.len() {
            return Err(shape(format!("parameter vector has length {}, expected {count}", flat.len())));
        }
        let mut it = flat.iter();
        self.visit_mut(|v| *v = *it.next().expect("length checked"));
        Ok(())
    }

    fn apply(&self, template: &DeepModel) -> DeepModel {
        let mut model = template.clone();
        for (layer, v) in model.layers.iter_mut().zip(&self.layers) {
            let h = &mut layer.hyper;
            h.sigma_power = v.log_sigma_power.exp();
            h.lengthscales = v.log_lengthscales.map(f64::exp);
            h.spectral_mean = v.spectral_mean.clone();
            h.shifts = v.shifts.clone();
            h.phases = v.phases.clone();
            h.wrap_phases();
            h.sigma_noise = v.log_sigma_noise.exp();
            match &v.log_spectral_vars {
                None => layer.points.0 = v.spectral_means.clone(),
                Some(lv) => {
                    layer.params.spectral_means = v.spectral_means.clone();
                    layer.params.spectral_vars = lv.map(f64::exp);
                }
            }
            layer.params.weight_mean = v.weight_mean.clone();
            let chol = v.weight_chol.lower_triangle();
            let mut s = &chol * chol.transpose();
            crate::linalg::symmetrize(&mut s);
            layer.params.weight_cov = s;
        }
        for (i, lat) in model.latents.iter_mut().enumerate() {
            lat.means = self.latent_means[i].clone();
            lat.vars = self.latent_log_vars[i].map(f64::exp);
        }
        model
    }
}

/// Flat unconstrained parameters of `model`.
pub fn pack(model: &DeepModel) -> Result<Vec<f64>> {
    Ok(ModelVec::from_model(model)?.flatten())
}

/// Model with the parameters of `theta` and everything else from `template`.
pub fn unpack(template: &DeepModel, theta: &[f64]) -> Result<DeepModel> {
    let mut v = ModelVec::from_model(template)?;
    v.fill(theta)?;
    Ok(v.apply(template))
}

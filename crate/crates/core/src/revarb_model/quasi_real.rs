//! Quasi-real observations: the trained predictive mean at every state plus
//! Gaussian noise with the per-state predictive variance.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::objective::layer_predictive;
use super::DeepModel;
use crate::error::Result;

/// Predictive means and variances of the output layer at all states.
pub fn output_predictive(model: &DeepModel) -> Result<(DVector<f64>, DVector<f64>)> {
    layer_predictive(model, model.num_hidden())
}

/// Endless stream of quasi-real output vectors, deterministic given the seed.
pub struct QuasiRealSampler {
    means: DVector<f64>,
    sds: DVector<f64>,
    rng: ChaCha8Rng,
}

impl QuasiRealSampler {
    pub fn new(model: &DeepModel, seed: u64) -> Result<Self> {
        let (means, vars) = output_predictive(model)?;
        Ok(Self::from_moments(means, vars, seed))
    }

    pub fn from_moments(means: DVector<f64>, vars: DVector<f64>, seed: u64) -> Self {
        Self { means, sds: vars.map(|v| v.max(0.0).sqrt()), rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn num_states(&self) -> usize {
        self.means.len()
    }

    /// Write the next sample into `out`.
    pub fn sample_into(&mut self, out: &mut [f64]) {
        for ((o, m), s) in out.iter_mut().zip(self.means.iter()).zip(self.sds.iter()) {
            let e: f64 = StandardNormal.sample(&mut self.rng);
            *o = m + s * e;
        }
    }
}

impl Iterator for QuasiRealSampler {
    type Item = DVector<f64>;
    fn next(&mut self) -> Option<DVector<f64>> {
        let mut v = DVector::zeros(self.means.len());
        self.sample_into(v.as_mut_slice());
        Some(v)
    }
}

/// `K x N` matrix of quasi-real samples. For large `K * N` prefer streaming
/// with [`QuasiRealSampler`].
pub fn generate_quasi_real(model: &DeepModel, num_samples: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut sampler = QuasiRealSampler::new(model, seed)?;
    let mut out = DMatrix::zeros(model.num_states, num_samples);
    for mut col in out.column_iter_mut() {
        sampler.sample_into(col.as_mut_slice());
    }
    Ok(out)
}

#![allow(dead_code)]

use drgp_pac::pac_bounds::{BoundInputs, LayerBoundInputs};
use drgp_pac::revarb_model::{Dataset, DeepModel, Horizons, Mode, ModelSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random model with moderate, well-conditioned variational parameters.
pub fn random_model(seed: u64, mode: Mode, num_hidden: usize, k: usize, m: usize, horizons: Horizons) -> DeepModel {
    let mut rng = rng(seed);
    let exo = DMatrix::from_fn(k, 1, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(k, 1, |_, _| rng.random_range(-1.0..1.0));
    let data = Dataset::new(exo, y).unwrap();
    let spec = ModelSpec { mode, num_hidden, num_features: m, horizons };
    let mut model = DeepModel::init(&spec, &data, seed).unwrap();
    for layer in model.layers.iter_mut() {
        let h = &mut layer.hyper;
        h.sigma_power = rng.random_range(0.5..1.5);
        h.lengthscales.iter_mut().for_each(|l| *l = rng.random_range(0.6..1.6));
        h.spectral_mean.iter_mut().for_each(|p| *p = rng.random_range(-0.1..0.1));
        h.shifts.iter_mut().for_each(|u| *u = rng.random_range(-0.3..0.3));
        h.sigma_noise = rng.random_range(0.2..0.6);
        let m = h.num_features;
        let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-0.4..0.4));
        layer.params.weight_cov = &a * a.transpose() + DMatrix::identity(m, m) * 0.3;
        layer.params.weight_mean.iter_mut().for_each(|v| *v *= 0.5);
        layer.params.spectral_vars.iter_mut().for_each(|b| *b = rng.random_range(0.2..1.2));
    }
    for lat in model.latents.iter_mut() {
        lat.vars.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.6));
        lat.means.iter_mut().for_each(|v| *v += rng.random_range(-0.2..0.2));
    }
    model.validate().unwrap();
    model
}

pub fn simple_model(seed: u64, mode: Mode, num_hidden: usize, k: usize, m: usize) -> DeepModel {
    random_model(seed, mode, num_hidden, k, m, Horizons { exo: 1, hidden: 1 })
}

/// Random bound inputs with `Var[h_k] >= Cov[k, k]` per state.
pub fn random_bound_inputs(rng: &mut ChaCha8Rng, layers: usize, k: usize) -> BoundInputs {
    let layers = (0..layers)
        .map(|_| {
            let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            let cov = &a * a.transpose() * rng.random_range(0.0..2.0);
            let state_vars = DVector::from_fn(k, |i, _| cov[(i, i)] + rng.random_range(0.0..1.0));
            LayerBoundInputs {
                state_vars,
                cov,
                sigma_noise: rng.random_range(0.1..2.0),
                lipschitz: rng.random_range(0.0..3.0),
                delta: rng.random_range(0.5..4.0),
            }
        })
        .collect();
    BoundInputs {
        layers,
        kl: rng.random_range(0.0..50.0),
        tau: rng.random_range(0.05..1.0),
        big_lipschitz: rng.random_range(0.5..3.0),
        input_dim: 2,
    }
}

/// Bound inputs whose variances, covariances and Lipschitz constants all
/// vanish.
pub fn zero_bound_inputs(layers: usize, k: usize) -> BoundInputs {
    BoundInputs {
        layers: (0..layers)
            .map(|_| LayerBoundInputs {
                state_vars: DVector::zeros(k),
                cov: DMatrix::zeros(k, k),
                sigma_noise: 0.5,
                lipschitz: 0.0,
                delta: 1.0,
            })
            .collect(),
        kl: 0.0,
        tau: 1.0,
        big_lipschitz: 1.0,
        input_dim: 1,
    }
}

use serde::{Deserialize, Serialize};

use super::objective::{objective_and_gradient, refresh_weights, OutputStats};
use super::params::{pack, unpack};
use super::{Dataset, DeepModel};
use crate::error::{shape, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Closed-form weight refresh period in iterations; 0 disables it.
    pub refresh_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 2000, learning_rate: 1e-2, refresh_every: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best model seen, including the input model.
    pub model: DeepModel,
    /// `L_REV` at every evaluated iterate.
    pub trace: Vec<f64>,
    pub best_bound: f64,
    pub best_iteration: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn parameters_finite(model: &DeepModel) -> bool {
    let layers = model.layers.iter().all(|layer| {
        let (h, p) = (&layer.hyper, &layer.params);
        [h.sigma_power, h.sigma_noise].iter().all(|v| v.is_finite())
            && h.lengthscales.iter().chain(h.spectral_mean.iter()).all(|v| v.is_finite())
            && p.weight_mean.iter().chain(p.weight_cov.iter()).all(|v| v.is_finite())
            && p.spectral_means.iter().chain(p.spectral_vars.iter()).all(|v| v.is_finite())
    });
    layers && model.latents.iter().all(|lat| lat.means.iter().chain(lat.vars.iter()).all(|v| v.is_finite()))
}

/// Maximize `L_REV` over all free parameters with Adam, refreshing the weight
/// posteriors in closed form every `refresh_every` iterations.
pub fn train(model: &DeepModel, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    model.validate()?;
    if data.exogenous != model.exogenous {
        return Err(shape("dataset design does not match the model"));
    }
    if data.num_states() != model.num_states {
        return Err(shape("dataset and model disagree on the number of states"));
    }
    if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::Validation("learning rate must be positive".into()));
    }
    let stats = OutputStats::from_columns(&data.outputs);

    let mut current = model.clone();
    let (f0, _) = objective_and_gradient(&current, &stats)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite { iteration: 0, detail: format!("initial bound is {}", -f0) });
    }
    let mut best = (current.clone(), -f0, 0);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut adam: Option<Adam> = None;

    for it in 0..=config.iterations {
        if config.refresh_every > 0 && it % config.refresh_every == 0 {
            refresh_weights(&mut current, &stats)?;
        }
        let (f, g) = objective_and_gradient(&current, &stats)?;
        let bound = -f;
        if !bound.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: it,
                detail: format!("bound {bound}, {} non-finite gradient entries", g.iter().filter(|v| !v.is_finite()).count()),
            });
        }
        trace.push(bound);
        if bound > best.1 {
            best = (current.clone(), bound, it);
        }
        if it == config.iterations {
            break;
        }
        let mut theta = pack(&current)?;
        adam.get_or_insert_with(|| Adam::new(theta.len())).step(&mut theta, &g, config.learning_rate);
        current = unpack(&current, &theta)?;
        if !parameters_finite(&current) {
            return Err(Error::NonFinite { iteration: it, detail: "parameters left the finite range".into() });
        }
    }
    Ok(TrainOutcome { model: best.0, trace, best_bound: best.1, best_iteration: best.2 })
}

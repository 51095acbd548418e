//! The bound's complexity term
//!
//! ```text
//! L(lambda) = sum_l [ lambda 1^T Var_l / (2 sigma_l^2)
//!                   - (N/2) log|I + c_l Cov_l|
//!                   + (N/2) v_l^T Cov_l (I + c_l Cov_l)^-1 v_l ]
//! c_l = lambda / (N sigma_l^2),   v_l = (1/N) (S_l / delta_l) (lambda / sigma_l^2) 1
//! ```
//!
//! evaluated through one eigendecomposition per layer, so each `(lambda, N)`
//! costs `O(K)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::linalg::{psd_tolerance, PsdSpectrum};

/// Per-layer inputs: per-state predictive variances (including noise), the
/// state covariance, noise level, Lipschitz constant and `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBoundInputs {
    pub state_vars: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub sigma_noise: f64,
    pub lipschitz: f64,
    pub delta: f64,
}

impl LayerBoundInputs {
    /// `1^T Var[h]`.
    pub fn sum_var(&self) -> f64 {
        self.state_vars.sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub layers: Vec<LayerBoundInputs>,
    pub kl: f64,
    pub tau: f64,
    /// Product of per-layer Lipschitz constants, for the covering extension.
    pub big_lipschitz: f64,
    pub input_dim: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Validation(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.kl >= 0.0) {
            return Err(domain(format!("KL must be non-negative, got {}", self.kl)));
        }
        if self.layers.is_empty() {
            return Err(domain("bound inputs need at least one layer"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let k = layer.state_vars.len();
            if layer.cov.shape() != (k, k) {
                return Err(shape(format!("layer {l}: covariance must be {k}x{k}")));
            }
            if !(layer.sigma_noise > 0.0) || !(layer.delta > 0.0) || !(layer.lipschitz >= 0.0) {
                return Err(domain(format!("layer {l}: need sigma > 0, delta > 0, S >= 0")));
            }
            if layer.state_vars.iter().any(|v| !(*v >= 0.0)) {
                return Err(domain(format!("layer {l}: variances must be non-negative")));
            }
            let tol = psd_tolerance(&layer.cov).max(1e-12 * layer.sum_var());
            for i in 0..k {
                if layer.state_vars[i] + tol < layer.cov[(i, i)] {
                    return Err(domain(format!(
                        "layer {l}: Var[h_{i}] = {} is below Cov[{i},{i}] = {}",
                        layer.state_vars[i],
                        layer.cov[(i, i)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The three rows of `L(lambda)`, summed over layers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LTerms {
    pub variance: f64,
    pub log_det: f64,
    pub lipschitz: f64,
}

impl LTerms {
    pub fn total(&self) -> f64 {
        self.variance + self.log_det + self.lipschitz
    }
}

struct PreparedLayer {
    sum_var: f64,
    sigma2: f64,
    s_over_delta: f64,
    eigenvalues: DVector<f64>,
    /// `(q_i^T 1)^2` for each eigenvector `q_i`.
    ones_weight: DVector<f64>,
    state_vars: DVector<f64>,
    cov_diag: DVector<f64>,
}

/// Cached evaluator of `L(lambda)` for fixed inputs.
pub struct CapitalL {
    layers: Vec<PreparedLayer>,
    num_states: usize,
}

fn layer_terms(
    sum_var: f64,
    sigma2: f64,
    s_over_delta: f64,
    eig: impl Iterator<Item = (f64, f64)>,
    lambda: f64,
    n: f64,
) -> LTerms {
    let c = lambda / (n * sigma2);
    let v = s_over_delta * lambda / (n * sigma2);
    let mut log_det = 0.0;
    let mut quad = 0.0;
    for (ev, w) in eig {
        log_det += (c * ev).ln_1p();
        quad += w * ev / (1.0 + c * ev);
    }
    LTerms {
        variance: lambda * sum_var / (2.0 * sigma2),
        log_det: -0.5 * n * log_det,
        lipschitz: 0.5 * n * v * v * quad,
    }
}

impl CapitalL {
    pub fn new(inputs: &BoundInputs) -> Result<Self> {
        inputs.validate()?;
        let layers = inputs
            .layers
            .iter()
            .map(|layer| {
                let spec = PsdSpectrum::new(&layer.cov)?;
                let ones = DVector::from_element(spec.dim(), 1.0);
                Ok(PreparedLayer {
                    sum_var: layer.sum_var(),
                    sigma2: layer.sigma_noise * layer.sigma_noise,
                    s_over_delta: layer.lipschitz / layer.delta,
                    eigenvalues: spec.eigenvalues.clone(),
                    ones_weight: spec.project(&ones).map(|p| p * p),
                    state_vars: layer.state_vars.clone(),
                    cov_diag: layer.cov.diagonal().map(|d| d.max(0.0)),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let num_states = inputs.layers[0].state_vars.len();
        Ok(Self { layers, num_states })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn terms(&self, lambda: f64, n: f64) -> LTerms {
        self.layers.iter().fold(LTerms::default(), |acc, p| {
            let t = layer_terms(
                p.sum_var,
                p.sigma2,
                p.s_over_delta,
                p.eigenvalues.iter().copied().zip(p.ones_weight.iter().copied()),
                lambda,
                n,
            );
            LTerms {
                variance: acc.variance + t.variance,
                log_det: acc.log_det + t.log_det,
                lipschitz: acc.lipschitz + t.lipschitz,
            }
        })
    }

    pub fn value(&self, lambda: f64, n: f64) -> f64 {
        self.terms(lambda, n).total()
    }

    /// The single-state reduction `L_k(lambda)`: `Var[h_k]` in place of
    /// `1^T Var[h]` and the scalar `Cov[k, k]` in place of `Cov`.
    pub fn state_value(&self, k: usize, lambda: f64, n: f64) -> f64 {
        self.layers
            .iter()
            .map(|p| {
                let c = p.cov_diag[k];
                layer_terms(p.state_vars[k], p.sigma2, p.s_over_delta, std::iter::once((c, 1.0)), lambda, n).total()
            })
            .sum()
    }
}

/// `L(lambda)` for `N` observations.
#[allow(non_snake_case)]
pub fn capital_L(inputs: &BoundInputs, lambda: f64, num_samples: usize) -> Result<f64> {
    if !(lambda > 0.0) || num_samples == 0 {
        return Err(domain("lambda and N must be positive"));
    }
    Ok(CapitalL::new(inputs)?.value(lambda, num_samples as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(var: f64, cov: f64, sigma: f64, s: f64, delta: f64) -> BoundInputs {
        BoundInputs {
            layers: vec![LayerBoundInputs {
                state_vars: DVector::from_element(1, var),
                cov: DMatrix::from_element(1, 1, cov),
                sigma_noise: sigma,
                lipschitz: s,
                delta,
            }],
            kl: 0.0,
            tau: 1.0,
            big_lipschitz: 1.0,
            input_dim: 1,
        }
    }

    #[test]
    fn scalar_reference() {
        let (v, c, sigma, s, delta, lambda, n): (f64, f64, f64, f64, f64, f64, f64) = (1.3, 0.4, 0.7, 2.0, 3.0, 5.0, 40.0);
        let s2 = sigma * sigma;
        let g = 1.0 + lambda * c / (n * s2);
        let u = lambda * s / (n * delta * s2);
        let expected = lambda * v / (2.0 * s2) - n / 2.0 * g.ln() + n / 2.0 * u * u * c / g;
        let got = capital_L(&scalar(v, c, sigma, s, delta), lambda, n as usize).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_covariance_leaves_variance_row() {
        let inputs = scalar(2.0, 0.0, 0.5, 3.0, 1.0);
        assert!((capital_L(&inputs, 4.0, 10).unwrap() - 4.0 * 2.0 / (2.0 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn rejects_variance_below_covariance() {
        assert!(capital_L(&scalar(0.1, 0.5, 1.0, 0.0, 1.0), 1.0, 1).is_err());
        let mut bad_tau = scalar(1.0, 0.5, 1.0, 0.0, 1.0);
        bad_tau.tau = 0.0;
        assert!(capital_L(&bad_tau, 1.0, 1).is_err());
    }
}

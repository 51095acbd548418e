//! Browser bindings for three interactive views: random-feature kernel
//! approximation, a generalization-gap curve and a quadratic-form log-MGF.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use drgp_pac::pac_bounds::{
    gap_bound, log_grid, monte_carlo_mgf, qfg_mgf, BoundInputs, CapitalL, LambdaRule, LayerBoundInputs,
    QuadraticForm,
};
use drgp_pac::spectral_features::{feature_matrix, SpectralLayerHyper, SpectralPoints};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wasm_bindgen::prelude::*;

fn js(err: impl std::fmt::Display) -> JsError {
    JsError::new(&err.to_string())
}

/// `[x..., approx..., exact...]` for `k(0, x)` on `points` inputs in `[-4, 4]`.
pub fn kernel_profile_native(num_features: usize, lengthscale: f64, seed: u64, points: usize) -> Result<Vec<f64>, String> {
    if num_features == 0 || points < 2 || !(lengthscale > 0.0) {
        return Err("need at least one feature, two points and a positive lengthscale".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases = DVector::from_fn(num_features, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
    let mut hyper = SpectralLayerHyper::with_phases(1, phases, 0.1).map_err(|e| e.to_string())?;
    hyper.lengthscales[0] = lengthscale;
    let z = SpectralPoints::new(DMatrix::from_fn(num_features, 1, |_, _| rng.sample(StandardNormal)), &hyper)
        .map_err(|e| e.to_string())?;
    let xs: Vec<f64> = (0..points).map(|i| -4.0 + 8.0 * i as f64 / (points - 1) as f64).collect();
    let inputs = DMatrix::from_fn(points + 1, 1, |r, _| if r == 0 { 0.0 } else { xs[r - 1] });
    let phi = feature_matrix(&inputs, &z, &hyper).map_err(|e| e.to_string())?;
    let origin = phi.row(0);
    let approx = (1..=points).map(|r| phi.row(r).dot(&origin));
    let exact = xs.iter().map(|x| (-x * x / (2.0 * lengthscale * lengthscale)).exp());
    Ok(xs.iter().copied().chain(approx).chain(exact).collect())
}

/// `[N..., gap...]` for `num_states` states whose covariance decays as
/// `rho^|i-j|`.
#[allow(clippy::too_many_arguments)]
pub fn gap_curve_native(
    num_states: usize,
    sigma_noise: f64,
    variance: f64,
    rho: f64,
    kl: f64,
    tau: f64,
    n_max: u64,
    points: usize,
    sqrt_lambda: bool,
) -> Result<Vec<f64>, String> {
    if num_states == 0 || !(variance >= 0.0) || !(rho.abs() < 1.0) {
        return Err("need K >= 1, variance >= 0 and |rho| < 1".into());
    }
    let cov = DMatrix::from_fn(num_states, num_states, |i, j| variance * rho.powi(i.abs_diff(j) as i32));
    let inputs = BoundInputs {
        layers: vec![LayerBoundInputs {
            state_vars: DVector::from_element(num_states, variance + sigma_noise * sigma_noise),
            cov,
            sigma_noise,
            lipschitz: 1.0,
            delta: 1.0,
        }],
        kl,
        tau,
        big_lipschitz: 1.0,
        input_dim: 1,
    };
    let rule = if sqrt_lambda { LambdaRule::SqrtN } else { LambdaRule::N };
    let grid = log_grid(n_max, points).map_err(|e| e.to_string())?;
    let eval = CapitalL::new(&inputs).map_err(|e| e.to_string())?;
    let values = grid
        .iter()
        .map(|&n| gap_bound(&eval, &inputs, rule.lambda(n as f64), n as f64).map(|b| b.value))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(grid.iter().map(|&n| n as f64).chain(values).collect())
}

/// `[lambda..., analytic..., monte carlo...]` for `a x^2 + b x + c` with
/// `x ~ N(0, s)` over `points` temperatures up to 90% of the domain edge.
/// The sampled curve has infinite variance past half the edge.
pub fn mgf_curve_native(a: f64, b: f64, c: f64, s: f64, points: usize, samples: usize) -> Result<Vec<f64>, String> {
    let q = QuadraticForm::new(
        DMatrix::from_element(1, 1, a),
        DVector::from_element(1, b),
        c,
        DMatrix::from_element(1, 1, s),
    )
    .map_err(|e| e.to_string())?;
    let top = q.lambda_max().min(2.0) * 0.9;
    let lambdas: Vec<f64> = (1..=points).map(|i| top * i as f64 / points as f64).collect();
    let analytic = lambdas.iter().map(|&l| qfg_mgf(&q, l)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let mc = lambdas
        .iter()
        .enumerate()
        .map(|(i, &l)| monte_carlo_mgf(&q, l, samples, i as u64).map(|(v, _)| v))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(lambdas.into_iter().chain(analytic).chain(mc).collect())
}

#[wasm_bindgen]
pub fn kernel_profile(num_features: usize, lengthscale: f64, seed: u32, points: usize) -> Result<Vec<f64>, JsError> {
    kernel_profile_native(num_features, lengthscale, seed as u64, points).map_err(js)
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn gap_curve(
    num_states: usize,
    sigma_noise: f64,
    variance: f64,
    rho: f64,
    kl: f64,
    tau: f64,
    n_max: u32,
    points: usize,
    sqrt_lambda: bool,
) -> Result<Vec<f64>, JsError> {
    gap_curve_native(num_states, sigma_noise, variance, rho, kl, tau, n_max as u64, points, sqrt_lambda).map_err(js)
}

#[wasm_bindgen]
pub fn mgf_curve(a: f64, b: f64, c: f64, s: f64, points: usize, samples: usize) -> Result<Vec<f64>, JsError> {
    mgf_curve_native(a, b, c, s, points, samples).map_err(js)
}

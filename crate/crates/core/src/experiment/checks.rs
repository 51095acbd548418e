//! Monte Carlo cross-checks of the closed-form Psi statistics and the
//! quadratic-form MGF, shared by the CLI and the test suites.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::pac_bounds::{monte_carlo_mgf, qfg_mgf, QuadraticForm};
use crate::psi_statistics::{
    monte_carlo_cross, monte_carlo_psi, psi1, psi2, psi_cross_vss, InputDistribution, SpectralDistribution,
};
use crate::spectral_features::SpectralLayerHyper;

/// Random Psi-statistics instance with input variances scaled by
/// `input_var` and spectral variances by `spectral_var`.
pub fn random_psi_instance(
    rng: &mut ChaCha8Rng,
    k: usize,
    m: usize,
    q: usize,
    input_var: f64,
    spectral_var: f64,
) -> (InputDistribution, SpectralDistribution, SpectralLayerHyper) {
    let hyper = SpectralLayerHyper {
        num_features: m,
        sigma_power: rng.random_range(0.5..1.5),
        lengthscales: DVector::from_fn(q, |_, _| rng.random_range(0.7..1.5)),
        spectral_mean: DVector::from_fn(q, |_, _| rng.random_range(-0.1..0.1)),
        shifts: DMatrix::from_fn(m, q, |_, _| rng.random_range(-0.5..0.5)),
        phases: DVector::from_fn(m, |_, _| rng.random_range(0.0..TAU)),
        sigma_noise: 0.2,
    };
    let inputs = InputDistribution {
        means: DMatrix::from_fn(k, q, |_, _| rng.random_range(-1.0..1.0)),
        vars: DMatrix::from_fn(k, q, |_, _| input_var * rng.random_range(0.2..1.0)),
    };
    let spectral = SpectralDistribution {
        means: DMatrix::from_fn(m, q, |_, _| rng.random_range(-1.0..1.0)),
        vars: DMatrix::from_fn(m, q, |_, _| spectral_var * rng.random_range(0.2..1.0)),
    };
    (inputs, spectral, hyper)
}

/// Largest `|analytic - estimate| / se` over all entries. Entries with a zero
/// standard error must agree to `1e-9`.
pub fn max_z_score(analytic: &DMatrix<f64>, estimate: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    analytic
        .iter()
        .zip(estimate.iter())
        .zip(se.iter())
        .map(|((a, e), s)| {
            let d = (a - e).abs();
            if *s > 0.0 {
                d / s
            } else if d < 1e-9 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiCheckRow {
    pub instance: usize,
    pub z_psi1: f64,
    pub z_psi2: f64,
    /// Cross statistic between states 0 and 1, when the instance has
    /// variational spectral points.
    pub z_cross: Option<f64>,
    pub pass: bool,
}

/// Compare analytic Psi statistics against Monte Carlo on random instances
/// (`K = 3`, `M = 4`, `Q = 2`). Odd instances use variational spectral
/// points and also check the cross statistic.
pub fn psi_check(seed: u64, num_samples: usize, instances: usize, threshold: f64) -> Result<Vec<PsiCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances)
        .map(|i| {
            let variational = i % 2 == 1;
            let (inputs, spectral, hyper) =
                random_psi_instance(&mut rng, 3, 4, 2, 0.5, if variational { 0.3 } else { 0.0 });
            let mc_seed = rng.random::<u64>();
            let est = monte_carlo_psi(&inputs, &spectral, &hyper, num_samples, mc_seed)?;
            let z_psi1 = max_z_score(&psi1(&inputs, &spectral, &hyper)?, &est.psi1, &est.psi1_se);
            let z_psi2 = max_z_score(&psi2(&inputs, &spectral, &hyper)?, &est.psi2, &est.psi2_se);
            let z_cross = if variational {
                let (mean, se) = monte_carlo_cross(&inputs, &spectral, &hyper, 0, 1, num_samples, mc_seed ^ 1)?;
                Some(max_z_score(&psi_cross_vss(&inputs, &spectral, &hyper, 0, 1)?, &mean, &se))
            } else {
                None
            };
            let worst = z_psi1.max(z_psi2).max(z_cross.unwrap_or(0.0));
            Ok(PsiCheckRow { instance: i, z_psi1, z_psi2, z_cross, pass: worst <= threshold })
        })
        .collect()
}

/// Random `K = 2` quadratic form with `Sigma` positive definite.
pub fn random_quadratic_form(rng: &mut ChaCha8Rng) -> QuadraticForm {
    let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
    let sigma = &a * a.transpose() + DMatrix::identity(2, 2) * 0.3;
    let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
    let e_mat = (&b + b.transpose()) * 0.5;
    let e_vec = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
    QuadraticForm::new(e_mat, e_vec, rng.random_range(-0.5..0.5), sigma).expect("valid by construction")
}

#[derive(Debug, Clone, Serialize)]
pub struct MgfCheckRow {
    pub instance: usize,
    pub lambda: f64,
    pub analytic: f64,
    pub monte_carlo: f64,
    /// Relative standard error of the Monte Carlo mean of `exp(lambda Q)`.
    pub mc_relative_se: f64,
    pub relative_error: f64,
    pub pass: bool,
}

/// Forms whose log-MGF is closer to zero than this are redrawn, since a
/// relative error is meaningless there.
pub const MIN_LOG_MGF: f64 = 0.1;

/// Compare `qfg_mgf` with Monte Carlo on random `K = 2` forms, using
/// `lambda = min(1, 0.3 lambda_max)` so that `exp(lambda Q)` has finite
/// variance.
pub fn mgf_check(seed: u64, num_samples: usize, instances: usize, tolerance: f64) -> Result<Vec<MgfCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances)
        .map(|i| {
            let (q, lambda, analytic) = loop {
                let q = random_quadratic_form(&mut rng);
                let lambda = (0.3 * q.lambda_max()).min(1.0);
                let analytic = qfg_mgf(&q, lambda)?;
                if analytic.abs() >= MIN_LOG_MGF {
                    break (q, lambda, analytic);
                }
            };
            let (monte_carlo, mc_relative_se) = monte_carlo_mgf(&q, lambda, num_samples, rng.random())?;
            let relative_error = (analytic - monte_carlo).abs() / analytic.abs().max(f64::MIN_POSITIVE);
            Ok(MgfCheckRow {
                instance: i,
                lambda,
                analytic,
                monte_carlo,
                mc_relative_se,
                relative_error,
                pass: relative_error < tolerance,
            })
        })
        .collect()
}

mod common;

use drgp_pac::experiment::synthetic_sine;
use drgp_pac::psi_statistics::InputDistribution;
use drgp_pac::revarb_model::{
    expected_nll, kl_q_p, layer_psi_stats, load_model, optimal_weight_posterior, output_predictive,
    predictive_posterior, save_model, train, variational_bound, Dataset, DeepModel, Horizons, Mode, ModelSpec,
    OutputStats, QuasiRealSampler, TrainConfig,
};
use drgp_pac::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::TAU;

/// Single-layer model over exogenous inputs only, so layer inputs are
/// deterministic.
fn single_layer(seed: u64, k: usize, m: usize) -> DeepModel {
    common::simple_model(seed, Mode::Ss, 0, k, m)
}

#[test]
fn predictive_with_zero_mean_weights() {
    let mut model = common::simple_model(1, Mode::Vss, 1, 6, 4);
    model.layers[1].params.weight_mean.fill(0.0);
    let psi = layer_psi_stats(&model, 1).unwrap();
    let s = &model.layers[1].params.weight_cov;
    let sigma2 = model.layers[1].hyper.sigma_noise.powi(2);
    for k in 0..6 {
        let (mean, var) = predictive_posterior(&model, 1, k).unwrap();
        assert_eq!(mean, 0.0);
        assert!((var - sigma2 - (&psi.psi2_rows[k] * s).trace()).abs() < 1e-12);
    }
    assert!(predictive_posterior(&model, 1, 6).is_err());
}

#[test]
fn predictive_with_deterministic_features_is_noise_only() {
    let mut model = single_layer(2, 5, 3);
    model.layers[0].params.weight_cov.fill(0.0);
    let sigma2 = model.layers[0].hyper.sigma_noise.powi(2);
    for k in 0..5 {
        let (_, var) = predictive_posterior(&model, 0, k).unwrap();
        assert!((var - sigma2).abs() < 1e-12, "state {k}: {var} vs {sigma2}");
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn predictive_matches_monte_carlo() {
    let model = common::simple_model(3, Mode::Vss, 1, 4, 3);
    let l = 1;
    let k = 2;
    let layer = &model.layers[l];
    let inputs: InputDistribution = model.build_inputs(l).unwrap();
    let q = inputs.dim();
    let m = layer.hyper.num_features;
    let chol = layer.params.weight_cov.clone().cholesky().unwrap().l();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 1_000_000;
    let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    for _ in 0..n {
        let x: Vec<f64> =
            (0..q).map(|j| inputs.means[(k, j)] + inputs.vars[(k, j)].sqrt() * normal(&mut rng)).collect();
        let e = DVector::from_fn(m, |_, _| normal(&mut rng));
        let a = &layer.params.weight_mean + &chol * e;
        let mut f = 0.0;
        for r in 0..m {
            let mut arg = layer.hyper.phases[r];
            for j in 0..q {
                let z = layer.params.spectral_means[(r, j)]
                    + layer.params.spectral_vars[(r, j)].sqrt() * normal(&mut rng);
                let w = z / layer.hyper.lengthscales[j] + TAU * layer.hyper.spectral_mean[j];
                arg += w * (x[j] - layer.hyper.shifts[(r, j)]);
            }
            f += a[r] * layer.hyper.amplitude() * arg.cos();
        }
        let h = f + layer.hyper.sigma_noise * normal(&mut rng);
        s1 += h;
        s2 += h * h;
        s3 += h * h * h;
        s4 += h * h * h * h;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = s2 / nf - mean * mean;
    let central4 = s4 / nf - 4.0 * mean * s3 / nf + 6.0 * mean * mean * s2 / nf - 3.0 * mean.powi(4);
    let (pm, pv) = predictive_posterior(&model, l, k).unwrap();
    let se_mean = (var / nf).sqrt();
    let se_var = ((central4 - var * var) / nf).sqrt();
    assert!((pm - mean).abs() < 4.0 * se_mean, "mean {pm} vs {mean} (se {se_mean})");
    assert!((pv - var).abs() < 4.0 * se_var, "variance {pv} vs {var} (se {se_var})");
}

#[test]
fn zero_residual_leaves_normalizer() {
    let mut model = single_layer(4, 6, 3);
    model.layers[0].params.weight_cov.fill(0.0);
    let psi = layer_psi_stats(&model, 0).unwrap();
    let y = &psi.psi1 * &model.layers[0].params.weight_mean;
    let sigma2 = model.layers[0].hyper.sigma_noise.powi(2);
    let expected = 3.0 * (TAU * sigma2).ln();
    assert!((expected_nll(&model, &y).unwrap() - expected).abs() < 1e-10);
}

/// Per-state assembly of the expected negative log-likelihood from the Psi
/// statistics, summed in the given state order.
fn term_by_term(model: &DeepModel, y: &DVector<f64>, order: &[usize]) -> f64 {
    let mut total = 0.0;
    for (l, layer) in model.layers.iter().enumerate() {
        let psi = layer_psi_stats(model, l).unwrap();
        let m = &layer.params.weight_mean;
        let s = &layer.params.weight_cov;
        let sigma2 = layer.hyper.sigma_noise.powi(2);
        for &k in order {
            let p1 = psi.psi1_row(k);
            let p2 = &psi.psi2_rows[k];
            let (target, extra) = match model.latents.get(l) {
                Some(lat) => (lat.means[k], lat.vars[k]),
                None => (y[k], 0.0),
            };
            let resid = target - p1.dot(m);
            let spread = (p2 * m).dot(m) - p1.dot(m).powi(2) + (p2 * s).trace();
            total += (resid * resid + spread + extra) / (2.0 * sigma2) + 0.5 * (TAU * sigma2).ln();
        }
    }
    total
}

#[test]
fn expected_nll_matches_term_by_term_assembly() {
    let model = common::simple_model(5, Mode::Ss, 1, 4, 2);
    let y = DVector::from_vec(vec![0.3, -1.2, 0.8, 0.1]);
    let direct = expected_nll(&model, &y).unwrap();
    let forward = term_by_term(&model, &y, &[0, 1, 2, 3]);
    let shuffled = term_by_term(&model, &y, &[2, 0, 3, 1]);
    assert!((direct - forward).abs() < 1e-10 * (1.0 + direct.abs()));
    assert!((forward - shuffled).abs() < 1e-10 * (1.0 + direct.abs()));
}

#[test]
fn expected_nll_falls_with_residual() {
    let model = single_layer(6, 8, 3);
    let fit = output_predictive(&model).unwrap().0;
    let r = DVector::from_fn(8, |i, _| (i as f64).sin());
    let values: Vec<f64> = [1.0, 0.5, 0.25, 0.0].iter().map(|t| expected_nll(&model, &(&fit + &r * *t)).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    assert!(expected_nll(&model, &DVector::zeros(7)).is_err());
}

fn prior_params(model: &mut DeepModel) {
    for layer in model.layers.iter_mut() {
        let m = layer.hyper.num_features;
        layer.params.weight_mean = DVector::zeros(m);
        layer.params.weight_cov = DMatrix::identity(m, m);
        layer.params.spectral_means.fill(0.0);
        layer.params.spectral_vars.fill(1.0);
    }
    for lat in model.latents.iter_mut() {
        lat.means.fill(0.0);
        lat.vars.fill(1.0);
    }
}

#[test]
fn bound_with_prior_posterior_is_negative_nll() {
    let mut model = common::simple_model(7, Mode::Vss, 1, 5, 3);
    prior_params(&mut model);
    assert_eq!(kl_q_p(&model).unwrap(), 0.0);
    let y = DVector::from_fn(5, |i, _| 0.2 * i as f64);
    let l_rev = variational_bound(&model, &DMatrix::from_column_slice(5, 1, y.as_slice())).unwrap();
    assert!((l_rev + expected_nll(&model, &y).unwrap()).abs() < 1e-12);
}

#[test]
fn doubling_observations_doubles_data_term() {
    let model = common::simple_model(8, Mode::Ss, 2, 6, 3);
    let y = DVector::from_fn(6, |i, _| (i as f64 * 0.4).cos());
    let kl = kl_q_p(&model).unwrap();
    let once = -variational_bound(&model, &DMatrix::from_column_slice(6, 1, y.as_slice())).unwrap() - kl;
    let twice = -variational_bound(&model, &DMatrix::from_fn(6, 2, |r, _| y[r])).unwrap() - kl;
    assert!((twice - 2.0 * once).abs() < 1e-10 * twice.abs());
}

#[test]
fn kl_rejects_non_psd_and_is_infinite_when_singular() {
    let mut model = single_layer(9, 4, 2);
    model.layers[0].params.weight_cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(kl_q_p(&model).unwrap(), f64::INFINITY);
    model.layers[0].params.weight_cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
    assert!(matches!(kl_q_p(&model), Err(Error::Domain(_))));
}

#[test]
fn optimal_posterior_without_signal() {
    let mut model = common::simple_model(10, Mode::Ss, 1, 6, 3);
    model.latents[0].vars.fill(1e8);
    let psi = layer_psi_stats(&model, 1).unwrap();
    assert!(psi.psi1.abs().max() < 1e-300);
    let target = DVector::from_element(6, 1.0);
    let (m, s) = optimal_weight_posterior(&model, 1, &target, 1.0).unwrap();
    assert!(m.abs().max() < 1e-300);
    let sigma2 = model.layers[1].hyper.sigma_noise.powi(2);
    let expected = (&psi.psi2 + DMatrix::identity(3, 3) * sigma2).try_inverse().unwrap() * sigma2;
    assert!((&s - expected).abs().max() < 1e-12);
}

#[test]
fn optimal_posterior_under_dominant_noise_is_prior() {
    let mut model = single_layer(11, 6, 3);
    model.layers[0].hyper.sigma_noise = 1e6;
    let (m, s) = optimal_weight_posterior(&model, 0, &DVector::from_element(6, 1.0), 1.0).unwrap();
    assert!(m.abs().max() < 1e-10);
    assert!((&s - DMatrix::identity(3, 3)).abs().max() < 1e-10);
}

#[test]
fn optimal_posterior_beats_perturbations() {
    let mut model = single_layer(12, 8, 4);
    let y = DVector::from_fn(8, |i, _| (0.7 * i as f64).sin());
    let (m, s) = optimal_weight_posterior(&model, 0, &y, 1.0).unwrap();
    model.layers[0].params.weight_mean = m.clone();
    model.layers[0].params.weight_cov = s.clone();
    let ymat = DMatrix::from_column_slice(8, 1, y.as_slice());
    let best = variational_bound(&model, &ymat).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let mut other = model.clone();
        other.layers[0].params.weight_mean = &m + DVector::from_fn(4, |_, _| rng.random_range(-0.2..0.2));
        let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.2..0.2));
        other.layers[0].params.weight_cov = &s * rng.random_range(0.5..1.5) + &a * a.transpose();
        assert!(variational_bound(&other, &ymat).unwrap() <= best);
    }
}

fn sine_data() -> (Dataset, f64) {
    let (data, norm) = synthetic_sine(64, 0.1, 3).normalized().unwrap();
    (data, 0.1 / norm.y_std)
}

#[test]
fn training_recovers_sine() {
    let (data, noise) = sine_data();
    let spec = ModelSpec { mode: Mode::Ss, num_hidden: 0, num_features: 10, horizons: Horizons { exo: 1, hidden: 1 } };
    let init = DeepModel::init(&spec, &data, 1).unwrap();
    let out = train(&init, &data, &TrainConfig::default()).unwrap();
    let (mean, _) = output_predictive(&out.model).unwrap();
    let y = data.outputs.column(0);
    let rmse = ((&mean - y).norm_squared() / 64.0).sqrt();
    assert!(rmse < 2.0 * noise, "rmse {rmse}, noise {noise}");
    assert!(out.trace.last().unwrap() >= &out.trace[0]);
    assert!(out.best_bound >= out.trace[0]);
    let stats = OutputStats::from_columns(&data.outputs);
    let recomputed = drgp_pac::revarb_model::variational_bound_from_parts(&out.model, &stats).unwrap();
    assert!((recomputed - out.best_bound).abs() < 1e-9 * recomputed.abs());
}

#[test]
fn converged_model_is_stationary() {
    let (data, _) = sine_data();
    let spec = ModelSpec { mode: Mode::Ss, num_hidden: 0, num_features: 4, horizons: Horizons { exo: 1, hidden: 1 } };
    let init = DeepModel::init(&spec, &data, 2).unwrap();
    let config = TrainConfig { iterations: 4000, ..TrainConfig::default() };
    let converged = train(&init, &data, &config).unwrap();
    let more = train(&converged.model, &data, &TrainConfig { iterations: 100, ..config }).unwrap();
    let gain = more.best_bound - converged.best_bound;
    assert!((0.0..1e-3).contains(&gain), "gain {gain}");
}

#[test]
fn training_never_loses_ground() {
    let model = common::simple_model(13, Mode::Vss, 1, 10, 3);
    let y = DMatrix::from_fn(10, 1, |r, _| (r as f64 * 0.5).sin());
    let data = Dataset::new(model.exogenous.clone(), y.clone()).unwrap();
    let start = variational_bound(&model, &y).unwrap();
    let out = train(&model, &data, &TrainConfig { iterations: 30, ..TrainConfig::default() }).unwrap();
    assert!(out.best_bound >= start);
    assert!(variational_bound(&out.model, &y).unwrap() >= start);
}

#[test]
fn training_aborts_on_non_finite_values() {
    let model = single_layer(14, 6, 2);
    let data = Dataset::new(model.exogenous.clone(), DMatrix::from_element(6, 1, 0.5)).unwrap();
    let config = TrainConfig { iterations: 50, learning_rate: 1e200, refresh_every: 0 };
    let err = train(&model, &data, &config);
    assert!(matches!(err, Err(Error::NonFinite { .. })));
}

#[test]
fn training_rejects_foreign_design() {
    let model = single_layer(15, 6, 2);
    let data = Dataset::new(DMatrix::zeros(6, 1), DMatrix::zeros(6, 1)).unwrap();
    assert!(train(&model, &data, &TrainConfig::default()).is_err());
}

#[test]
fn quasi_real_without_noise_repeats_the_mean() {
    let means = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let samples: Vec<DVector<f64>> = QuasiRealSampler::from_moments(means.clone(), DVector::zeros(3), 4).take(20).collect();
    assert!(samples.iter().all(|s| *s == means));
}

#[test]
fn quasi_real_sample_mean_obeys_clt() {
    let model = common::simple_model(16, Mode::Ss, 1, 12, 4);
    let (means, vars) = output_predictive(&model).unwrap();
    let n = 50_000;
    let y = drgp_pac::revarb_model::generate_quasi_real(&model, n, 8).unwrap();
    for k in 0..12 {
        let sample_mean = y.row(k).mean();
        let se = (vars[k] / n as f64).sqrt();
        assert!((sample_mean - means[k]).abs() < 4.0 * se, "state {k}");
    }
    assert_eq!(y, drgp_pac::revarb_model::generate_quasi_real(&model, n, 8).unwrap());
}

#[test]
fn quasi_real_protocol_scale_stays_finite() {
    let model = common::simple_model(17, Mode::Ss, 1, 512, 4);
    let mut sampler = QuasiRealSampler::new(&model, 3).unwrap();
    let mut stats = OutputStats::empty(512);
    let mut buf = vec![0.0; 512];
    for _ in 0..50_000 {
        sampler.sample_into(&mut buf);
        stats.push(&buf);
    }
    assert_eq!(stats.count, 50_000);
    assert!(stats.sum_sq.is_finite() && stats.sum.iter().all(|v| v.is_finite()));
    assert!(drgp_pac::revarb_model::variational_bound_from_parts(&model, &stats).unwrap().is_finite());
}

#[test]
fn saved_model_round_trips_through_a_file() {
    let model = common::simple_model(18, Mode::Vss, 2, 7, 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    let again = dir.path().join("again.txt");
    save_model(&loaded, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

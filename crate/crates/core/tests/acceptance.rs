//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use drgp_pac::experiment::checks::{mgf_check, psi_check};
use drgp_pac::experiment::{run_bound_evolution, synthetic_actuator, synthetic_sine, ExperimentConfig};
use drgp_pac::pac_bounds::{
    bound_inputs_from_model, capital_L, log_log_slope, theorem3_gap_bound, theorem5_oracle_bound,
    union_lower_bound, CapitalL, ModelBoundInputs,
};
use drgp_pac::revarb_model::{
    expected_nll, generate_quasi_real, kl_q_p, objective_and_gradient, pack, train, unpack, variational_bound,
    variational_bound_from_parts, DeepModel, Horizons, Mode, ModelSpec, OutputStats, TrainConfig,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const PACVAR_TOL: f64 = 1e-8;
const PACVAR_BUDGET: Duration = Duration::from_secs(30);
const PSI_SAMPLES: usize = 1_000_000;
const PSI_INSTANCES: usize = 20;
const PSI_Z: f64 = 4.0;
const PSI_BUDGET: Duration = Duration::from_secs(120);
const MGF_SAMPLES: usize = 10_000_000;
const MGF_INSTANCES: usize = 10;
const MGF_REL: f64 = 0.02;
const MGF_BUDGET: Duration = Duration::from_secs(120);
const SLOPE_WINDOW: (f64, f64) = (-0.65, -0.35);
const SLOPE_BUDGET: Duration = Duration::from_secs(60);
const PROTOCOL_BUDGET: Duration = Duration::from_secs(600);
const GRAD_H: f64 = 1e-5;
const GRAD_REL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    println!(
        "criterion {id:>2} {}: {name}: {} ({:.1} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    );
    out.pass
}

fn within(budget: Duration, start: Instant) -> bool {
    start.elapsed() < budget
}

/// `N E_Q[L_D] + KL + L_REV = 0` with the data term summed one observation
/// at a time and `L_REV` taken from the aggregated statistics.
fn pacvar_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let num_hidden = 1 + i % 2;
        let k = rng.random_range(4..=32);
        let m = rng.random_range(2..=16);
        let mode = if i % 3 == 0 { Mode::Vss } else { Mode::Ss };
        let model = common::simple_model(1000 + i as u64, mode, num_hidden, k, m);
        let n = rng.random_range(1..=5);
        let y = generate_quasi_real(&model, n, i as u64).unwrap();
        let data_term: f64 = y.column_iter().map(|c| expected_nll(&model, &c.into_owned()).unwrap()).sum();
        let l_rev = variational_bound(&model, &y).unwrap();
        let residual = (data_term + kl_q_p(&model).unwrap() + l_rev).abs() / (1.0 + l_rev.abs());
        worst = worst.max(residual);
    }
    Outcome {
        pass: worst < PACVAR_TOL && within(PACVAR_BUDGET, start),
        detail: format!("max relative residual {worst:.2e} over 50 models (tol {PACVAR_TOL:e})"),
    }
}

fn psi_oracle() -> Outcome {
    let start = Instant::now();
    let rows = psi_check(2024, PSI_SAMPLES, PSI_INSTANCES, PSI_Z).unwrap();
    let worst = rows.iter().map(|r| r.z_psi1.max(r.z_psi2).max(r.z_cross.unwrap_or(0.0))).fold(0.0, f64::max);
    let crosses = rows.iter().filter(|r| r.z_cross.is_some()).count();
    Outcome {
        pass: rows.iter().all(|r| r.pass) && within(PSI_BUDGET, start),
        detail: format!("max |z| {worst:.2} over {} instances ({crosses} with cross terms), limit {PSI_Z}", rows.len()),
    }
}

fn mgf_oracle() -> Outcome {
    let start = Instant::now();
    let rows = mgf_check(77, MGF_SAMPLES, MGF_INSTANCES, MGF_REL).unwrap();
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    Outcome {
        pass: rows.iter().all(|r| r.pass) && within(MGF_BUDGET, start),
        detail: format!("max relative error {worst:.2e} over {} instances, limit {MGF_REL}", rows.len()),
    }
}

fn trained_sine_model() -> (DeepModel, ModelBoundInputs) {
    let (data, _) = synthetic_sine(64, 0.1, 5).normalized().unwrap();
    let spec = ModelSpec { mode: Mode::Ss, num_hidden: 1, num_features: 10, horizons: Horizons { exo: 1, hidden: 1 } };
    let init = DeepModel::init(&spec, &data, 5).unwrap();
    let model = train(&init, &data, &TrainConfig::default()).unwrap().model;
    let inputs = bound_inputs_from_model(&model, 0.5, None).unwrap();
    (model, inputs)
}

fn slope_grid() -> Vec<f64> {
    (0..=40).map(|i| 10f64.powf(3.0 + 2.0 * i as f64 / 40.0)).collect()
}

fn in_window(s: f64) -> bool {
    s >= SLOPE_WINDOW.0 && s <= SLOPE_WINDOW.1
}

fn consistency_rate(bi: &ModelBoundInputs, start: Instant) -> Outcome {
    let eval = CapitalL::new(&bi.inputs).unwrap();
    let at = |n: f64| theorem3_gap_bound(&eval, &bi.inputs, n).unwrap().value;
    let far = at(1e6);
    let ns = slope_grid();
    let diffs: Vec<f64> = ns.iter().map(|&n| at(n) - far).collect();
    let slope = log_log_slope(&ns, &diffs);
    Outcome {
        pass: diffs.iter().all(|d| *d > 0.0) && in_window(slope) && within(SLOPE_BUDGET, start),
        detail: format!("slope {slope:.4} of gap(N) - gap(1e6) over N in [1e3, 1e5], window {SLOPE_WINDOW:?}"),
    }
}

fn oracle_rate(bi: &ModelBoundInputs, start: Instant) -> Outcome {
    let eval = CapitalL::new(&bi.inputs).unwrap();
    let at = |n: f64| theorem5_oracle_bound(&eval, &bi.inputs, bi.oracle_residual, n).unwrap().value;
    let ns = slope_grid();
    let excess: Vec<f64> = ns.iter().map(|&n| at(n) - bi.oracle_residual).collect();
    let slope = log_log_slope(&ns, &excess);
    let limit = at(1e12) - bi.oracle_residual;
    let corrected: Vec<f64> = ns.iter().map(|&n| at(n) - bi.oracle_residual - limit).collect();
    let corrected_slope = log_log_slope(&ns, &corrected);
    Outcome {
        pass: excess.iter().all(|d| *d > 0.0) && in_window(slope) && within(SLOPE_BUDGET, start),
        detail: format!(
            "slope {slope:.4} of bound(N) - L_Ora over N in [1e3, 1e5], window {SLOPE_WINDOW:?}; \
             bound - L_Ora tends to {limit:.4}, slope after removing it {corrected_slope:.4}"
        ),
    }
}

fn protocol() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        dataset: concat!(env!("CARGO_MANIFEST_DIR"), "/data/actuator_k512.csv").into(),
        output_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let fixture_ok = drgp_pac::experiment::load_time_series(&config.dataset).unwrap() == synthetic_actuator(512, 1);
    let run = run_bound_evolution(&config).unwrap();
    let tail: Vec<f64> = run.curve.points.iter().filter(|p| p.n >= 1000).map(|p| p.bound.value).collect();
    let linear = tail.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs());
    let logs: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let log_scale = tail.iter().all(|v| *v > 0.0) && logs.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let svg = std::fs::read_to_string(&run.files.svg).unwrap();
    let files_ok = run.files.csv.exists()
        && run.files.manifest.exists()
        && svg.matches("<polyline").count() == 2
        && run.curve.points.last().map(|p| p.n) == Some(50_000)
        && run.model.num_states == 512;
    let elapsed = start.elapsed();
    Outcome {
        pass: fixture_ok && linear && log_scale && files_ok && elapsed < PROTOCOL_BUDGET,
        detail: format!(
            "K = 512, N_max = 50000, {} grid points, bound {:.3} at N = 1e3 -> {:.3} at N = 5e4, \
             nonincreasing: linear {linear}, log {log_scale}",
            run.curve.points.len(),
            tail.first().unwrap(),
            tail.last().unwrap()
        ),
    }
}

fn capital_l_nonnegative() -> Outcome {
    let mut rng = common::rng(7);
    let mut min_value = f64::INFINITY;
    for _ in 0..100 {
        let layers = rng.random_range(1..=3);
        let k = rng.random_range(1..=12);
        let inputs = common::random_bound_inputs(&mut rng, layers, k);
        let n = rng.random_range(1..=100_000);
        let lambda = rng.random_range(0.01..(n as f64).max(1.0));
        min_value = min_value.min(capital_L(&inputs, lambda, n).unwrap());
    }
    let zero = [(1, 1), (2, 5), (3, 9)]
        .iter()
        .all(|&(l, k)| capital_L(&common::zero_bound_inputs(l, k), 3.0, 17).unwrap() == 0.0);
    Outcome {
        pass: min_value > 0.0 && zero,
        detail: format!("min L(lambda) over 100 random inputs {min_value:.3e}; vanishing inputs give exactly 0: {zero}"),
    }
}

fn prior_model() -> DeepModel {
    let mut model = common::simple_model(3, Mode::Vss, 1, 6, 3);
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
    model
}

fn kl_suite() -> Outcome {
    let prior = prior_model();
    let at_prior = kl_q_p(&prior).unwrap();

    let mut scalar = common::simple_model(4, Mode::Ss, 0, 5, 1);
    scalar.layers[0].params.weight_mean = DVector::from_element(1, 1.0);
    scalar.layers[0].params.weight_cov = DMatrix::identity(1, 1);
    let scalar_kl = kl_q_p(&scalar).unwrap();

    type Perturbation = Box<dyn Fn(&mut DeepModel)>;
    let perturbations: Vec<Perturbation> = vec![
        Box::new(|m| m.layers[0].params.weight_mean[1] = 0.3),
        Box::new(|m| m.layers[1].params.weight_cov[(0, 0)] = 1.4),
        Box::new(|m| m.layers[0].params.spectral_means[(2, 0)] = -0.2),
        Box::new(|m| m.layers[1].params.spectral_vars[(0, 0)] = 0.7),
        Box::new(|m| m.latents[0].means[3] = 0.1),
        Box::new(|m| m.latents[0].vars[0] = 2.0),
    ];
    let positive = perturbations.iter().all(|p| {
        let mut m = prior.clone();
        p(&mut m);
        kl_q_p(&m).unwrap() > 0.0
    });
    Outcome {
        pass: at_prior == 0.0 && scalar_kl == 0.5 && positive,
        detail: format!("KL at prior {at_prior:e}, N(1,1)||N(0,1) = {scalar_kl}, all 6 perturbations positive: {positive}"),
    }
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..10u64 {
        let mode = if i % 2 == 0 { Mode::Ss } else { Mode::Vss };
        let hidden = (i % 3) as usize;
        let model = common::random_model(200 + i, mode, hidden, 5, 3, Horizons { exo: 1 + (i % 2) as usize, hidden: 1 });
        let y = DMatrix::from_fn(5, 2, |r, c| ((r + 3 * c) as f64 * 0.9).cos());
        let stats = OutputStats::from_columns(&y);
        let (_, g) = objective_and_gradient(&model, &stats).unwrap();
        let theta = pack(&model).unwrap();
        let f = |t: &[f64]| -variational_bound_from_parts(&unpack(&model, t).unwrap(), &stats).unwrap();
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            tp[j] += GRAD_H;
            let mut tm = theta.clone();
            tm[j] -= GRAD_H;
            let fd = (f(&tp) - f(&tm)) / (2.0 * GRAD_H);
            worst = worst.max((fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1.0));
            count += 1;
        }
    }
    Outcome {
        pass: worst < GRAD_REL,
        detail: format!("max relative error {worst:.2e} over {count} coordinates of 10 models (h = {GRAD_H:e})"),
    }
}

/// Exhaustive check over every triple of events on an 8-point space.
fn union_lemma() -> Outcome {
    let mut rng = common::rng(10);
    let mut checked = 0u64;
    let mut violations = 0u64;
    for trial in 0..3 {
        let weights: Vec<f64> = if trial == 0 { vec![1.0; 8] } else { (0..8).map(|_| rng.random_range(0.0..1.0)).collect() };
        let total: f64 = weights.iter().sum();
        let prob: Vec<f64> = (0..256u32)
            .map(|mask| (0..8).filter(|b| mask >> b & 1 == 1).map(|b| weights[b] / total).sum())
            .collect();
        for a in 0..256usize {
            for b in 0..256usize {
                for c in 0..256usize {
                    let joint = prob[a & b & c];
                    if joint < union_lower_bound(&[prob[a], prob[b], prob[c]]) - 1e-12 {
                        violations += 1;
                    }
                    checked += 1;
                }
            }
        }
    }
    Outcome { pass: violations == 0, detail: format!("{checked} event triples on 3 probability spaces, {violations} violations") }
}

fn main() {
    let mut results = vec![
        criterion(1, "variational identity", pacvar_identity),
        criterion(2, "Psi statistics vs Monte Carlo", psi_oracle),
        criterion(3, "quadratic-form MGF vs Monte Carlo", mgf_oracle),
    ];
    let mut trained = None;
    results.push(criterion(4, "gap bound rate", || {
        let start = Instant::now();
        let (_, bi) = trained_sine_model();
        let out = consistency_rate(&bi, start);
        trained = Some(bi);
        out
    }));
    let bi = trained.expect("criterion 4 trains the model");
    results.push(criterion(5, "oracle bound rate", || oracle_rate(&bi, Instant::now())));
    results.push(criterion(6, "protocol replication", protocol));
    results.push(criterion(7, "L(lambda) non-negative", capital_l_nonnegative));
    results.push(criterion(8, "KL suite", kl_suite));
    results.push(criterion(9, "gradient check", gradient_check));
    results.push(criterion(10, "union bound lemma", union_lemma));
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

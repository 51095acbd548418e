//! End-to-end bound evolution: train (or load) a model, stream quasi-real
//! samples up to `N_max`, evaluate the chosen bound on a log grid and write
//! CSV, SVG and a JSON manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::{load_time_series, Normalization};
use super::plot::{render_svg, sparkline};
use crate::error::{Error, Result};
use crate::pac_bounds::{
    bound_inputs_from_model, evaluate_curve, log_grid, BoundCurve, BoundKind, CurvePoint, CurveSide, LambdaRule,
    ModelBoundInputs,
};
use crate::revarb_model::{
    kl_q_p, load_model, save_model, train, Dataset, DeepModel, ExpectedNll, Horizons, Mode, ModelSpec, OutputStats,
    QuasiRealSampler, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    /// Existing model file; when absent a model is trained.
    pub model: Option<PathBuf>,
    pub mode: Mode,
    /// Number of hidden layers `L`.
    pub num_hidden: usize,
    pub num_features: usize,
    pub horizons: Horizons,
    /// Keep only the first `K` states of the dataset.
    pub num_states: Option<usize>,
    pub train: TrainConfig,
    pub tau: f64,
    pub lambda_rule: LambdaRule,
    pub bound: BoundKind,
    pub n_max: u64,
    pub grid_points: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            model: None,
            mode: Mode::Ss,
            num_hidden: 1,
            num_features: 10,
            horizons: Horizons { exo: 1, hidden: 1 },
            num_states: None,
            train: TrainConfig::default(),
            tau: 0.5,
            lambda_rule: LambdaRule::SqrtN,
            bound: BoundKind::Gap,
            n_max: 50_000,
            grid_points: 60,
            seed: 0,
            output_dir: PathBuf::from("drgp-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(msg.into()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.num_features == 0 {
            return bad("num_features must be positive");
        }
        if self.horizons.exo == 0 || self.horizons.hidden == 0 {
            return bad("horizons must be positive");
        }
        if self.num_states == Some(0) {
            return bad("num_states must be positive");
        }
        if self.n_max == 0 || self.grid_points == 0 {
            return bad("N_max and the grid size must be positive");
        }
        if !(self.train.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            mode: self.mode,
            num_hidden: self.num_hidden,
            num_features: self.num_features,
            horizons: self.horizons,
        }
    }
}

/// One CSV row. Columns are `N,bound,term1,term2,term3,kl,wall_ms`; new
/// columns are only ever appended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    #[serde(rename = "N")]
    pub n: u64,
    pub bound: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub kl: f64,
    pub wall_ms: f64,
}

impl From<&CurvePoint> for CurveRecord {
    fn from(p: &CurvePoint) -> Self {
        Self {
            n: p.n,
            bound: p.bound.value,
            term1: p.bound.term1,
            term2: p.bound.term2,
            term3: p.bound.term3,
            kl: p.bound.kl,
            wall_ms: p.wall_ms,
        }
    }
}

pub const CSV_COLUMNS: [&str; 7] = ["N", "bound", "term1", "term2", "term3", "kl", "wall_ms"];

pub fn write_curve_csv(curve: &BoundCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for p in &curve.points {
        w.serialize(CurveRecord::from(p)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|rec| rec.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

/// Load the configured dataset, truncated to `num_states` if requested.
pub fn experiment_dataset(config: &ExperimentConfig) -> Result<(Dataset, Normalization)> {
    let mut ts = load_time_series(&config.dataset)?;
    if let Some(k) = config.num_states {
        ts = ts.truncated(k)?;
    }
    ts.normalized()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub initial_bound: f64,
    pub best_bound: f64,
    pub best_iteration: usize,
    pub seconds: f64,
}

/// Load the configured model, or initialize and train one on the dataset.
pub fn obtain_model(config: &ExperimentConfig) -> Result<(DeepModel, Option<TrainSummary>)> {
    if let Some(path) = &config.model {
        return Ok((load_model(path)?, None));
    }
    let (data, _) = experiment_dataset(config)?;
    let init = DeepModel::init(&config.model_spec(), &data, config.seed)?;
    let start = Instant::now();
    let out = train(&init, &data, &config.train)?;
    let summary = TrainSummary {
        initial_bound: out.trace[0],
        best_bound: out.best_bound,
        best_iteration: out.best_iteration,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((out.model, Some(summary)))
}

/// Per grid point: `L_REV` on the first `N` quasi-real samples and the mean
/// expected negative log-likelihood `E_Q[L_D]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalSide {
    pub l_rev: Vec<f64>,
    pub mean_nll: Vec<f64>,
}

/// Stream `max(grid)` quasi-real samples and record the empirical side at
/// every grid point.
pub fn empirical_side(model: &DeepModel, grid: &[u64], seed: u64) -> Result<EmpiricalSide> {
    let nll = ExpectedNll::new(model)?;
    let kl = kl_q_p(model)?;
    let mut sampler = QuasiRealSampler::new(model, seed)?;
    let mut stats = OutputStats::empty(model.num_states);
    let mut buf = vec![0.0; model.num_states];
    let mut out = EmpiricalSide { l_rev: Vec::with_capacity(grid.len()), mean_nll: Vec::with_capacity(grid.len()) };
    let mut done = 0u64;
    for &n in grid {
        while done < n {
            sampler.sample_into(&mut buf);
            stats.push(&buf);
            done += 1;
        }
        let d = nll.value(&stats)?;
        out.l_rev.push(-(d + kl));
        out.mean_nll.push(d / n as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub manifest: PathBuf,
    pub model: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BoundEvolution {
    pub curve: BoundCurve,
    pub model: DeepModel,
    pub bound_inputs: ModelBoundInputs,
    pub empirical: EmpiricalSide,
    pub training: Option<TrainSummary>,
    pub files: OutputFiles,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    csv_columns: [&'static str; 7],
    grid: Vec<u64>,
    model_file: &'a Path,
    training: &'a Option<TrainSummary>,
    kl: f64,
    oracle_residual: f64,
    lipschitz: Vec<f64>,
    deltas: Vec<f64>,
    quasi_real_seed: u64,
    mean_nll_at_n_max: f64,
}

/// Run the full pipeline and write `curve.csv`, `curve.svg`,
/// `manifest.json` and `model.txt` into the output directory.
pub fn run_bound_evolution(config: &ExperimentConfig) -> Result<BoundEvolution> {
    config.validate()?;
    let (model, training) = obtain_model(config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let files = OutputFiles {
        csv: config.output_dir.join("curve.csv"),
        svg: config.output_dir.join("curve.svg"),
        manifest: config.output_dir.join("manifest.json"),
        model: config.output_dir.join("model.txt"),
    };
    save_model(&model, &files.model)?;

    let bound_inputs = bound_inputs_from_model(&model, config.tau, None)?;
    let grid = log_grid(config.n_max, config.grid_points)?;
    let empirical = empirical_side(&model, &grid, config.seed)?;
    let side = match config.bound {
        BoundKind::Empirical => CurveSide::VariationalBound(&empirical.l_rev),
        BoundKind::Gap => CurveSide::None,
        BoundKind::Oracle => CurveSide::Oracle(bound_inputs.oracle_residual),
    };
    let curve = evaluate_curve(&bound_inputs.inputs, config.bound, config.lambda_rule, &grid, side, config.seed)?;

    write_curve_csv(&curve, &files.csv)?;
    std::fs::write(&files.svg, render_svg(&curve))?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config,
        csv_columns: CSV_COLUMNS,
        grid: grid.clone(),
        model_file: &files.model,
        training: &training,
        kl: bound_inputs.inputs.kl,
        oracle_residual: bound_inputs.oracle_residual,
        lipschitz: bound_inputs.inputs.layers.iter().map(|l| l.lipschitz).collect(),
        deltas: bound_inputs.inputs.layers.iter().map(|l| l.delta).collect(),
        quasi_real_seed: config.seed,
        mean_nll_at_n_max: *empirical.mean_nll.last().expect("grid is non-empty"),
    };
    std::fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok(BoundEvolution { curve, model, bound_inputs, empirical, training, files })
}

/// One-line terminal summary of a curve.
pub fn curve_summary(curve: &BoundCurve) -> String {
    let values: Vec<f64> = curve.points.iter().map(|p| p.bound.value).collect();
    let first = curve.points.first().map_or(f64::NAN, |p| p.bound.value);
    let last = curve.points.last().map_or(f64::NAN, |p| p.bound.value);
    format!(
        "{} bound, lambda = {}, tau = {}: {} {first:.4} -> {last:.4}",
        curve.kind,
        curve.lambda_rule,
        curve.tau,
        sparkline(&values)
    )
}

//! Command-line front end.

use std::ffi::OsString;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::checks::{mgf_check, psi_check};
use super::report::{bound_report, render_report};
use super::run::{curve_summary, obtain_model, run_bound_evolution, ExperimentConfig};
use crate::error::{Error, Result};
use crate::pac_bounds::{BoundKind, LambdaRule};
use crate::revarb_model::{load_model, save_model, Horizons, Mode, QuasiRealSampler, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "drgp-pac", version, about = "Train deep recurrent sparse-spectrum GPs and evaluate PAC-Bayesian bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a dataset and save it.
    Train(TrainArgs),
    /// Evaluate a bound over a log grid of N and write CSV, SVG and a manifest.
    BoundCurve(BoundCurveArgs),
    /// Write quasi-real samples from a trained model.
    GenData(GenDataArgs),
    /// Compare the closed-form Psi statistics with Monte Carlo.
    PsiCheck(PsiCheckArgs),
    /// Compare the quadratic-form MGF with Monte Carlo.
    MgfCheck(MgfCheckArgs),
    /// Tabulate every bound variant at selected N.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "DRGP_OUT_DIR", default_value = "drgp-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Time-series CSV with header `t,u_1,..,u_Qx,y`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// SS or VSS.
    #[arg(long, default_value = "ss")]
    mode: Mode,
    /// Number of hidden layers.
    #[arg(long, default_value_t = 1)]
    layers: usize,
    /// Spectral points per layer.
    #[arg(long, default_value_t = 10)]
    features: usize,
    /// Exogenous time horizon.
    #[arg(long, default_value_t = 1)]
    hx: usize,
    /// Latent time horizon.
    #[arg(long, default_value_t = 1)]
    hh: usize,
    /// Keep only the first K states.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Closed-form weight refresh period; 0 disables it.
    #[arg(long, default_value_t = 10)]
    refresh_every: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn config(&self, model: Option<PathBuf>, out_dir: PathBuf) -> Result<ExperimentConfig> {
        if self.data.is_none() && model.is_none() {
            return Err(Error::Validation("either --data or --model is required".into()));
        }
        Ok(ExperimentConfig {
            dataset: self.data.clone().unwrap_or_default(),
            model,
            mode: self.mode,
            num_hidden: self.layers,
            num_features: self.features,
            horizons: Horizons { exo: self.hx, hidden: self.hh },
            num_states: self.states,
            train: TrainConfig { iterations: self.iterations, learning_rate: self.lr, refresh_every: self.refresh_every },
            seed: self.seed,
            output_dir: out_dir,
            ..ExperimentConfig::default()
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutDir,
    /// Model file to write (default: <out-dir>/model.txt).
    #[arg(long)]
    model_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BoundCurveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    out: OutDir,
    /// Use a saved model instead of training.
    #[arg(long)]
    model_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// N or sqrtN.
    #[arg(long, default_value = "sqrtN")]
    lambda: LambdaRule,
    /// empirical, gap or oracle.
    #[arg(long, default_value = "gap")]
    bound: BoundKind,
    #[arg(long, default_value_t = 50_000)]
    n_max: u64,
    /// Number of log-spaced grid points.
    #[arg(long, default_value_t = 60)]
    grid: usize,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default: <out-dir>/quasi_real.csv).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    out_dir: OutDir,
}

#[derive(Args, Debug)]
struct PsiCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    instances: usize,
    /// Largest admissible |analytic - MC| in standard errors.
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct MgfCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    /// Largest admissible relative error.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    model_file: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [1_000u64, 10_000, 50_000])]
    n: Vec<u64>,
    /// Seed of the quasi-real samples behind the empirical column.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse `argv` (program name first) and run the subcommand. Returns the
/// process exit code: 0 on success, 1 on validation or runtime errors and
/// failed checks, 2 on usage errors.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Train(a) => {
            let config = a.model.config(None, a.out.out_dir.clone())?;
            config.validate()?;
            let (model, summary) = obtain_model(&config)?;
            let path = a.model_out.unwrap_or_else(|| a.out.out_dir.join("model.txt"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            save_model(&model, &path)?;
            if let Some(s) = summary {
                println!(
                    "L_REV {:.4} -> {:.4} (best at iteration {}, {:.1} s)",
                    s.initial_bound, s.best_bound, s.best_iteration, s.seconds
                );
            }
            println!("model written to {}", path.display());
            Ok(0)
        }
        Command::BoundCurve(a) => {
            let config = ExperimentConfig {
                tau: a.tau,
                lambda_rule: a.lambda,
                bound: a.bound,
                n_max: a.n_max,
                grid_points: a.grid,
                ..a.model.config(a.model_file, a.out.out_dir)?
            };
            let run = run_bound_evolution(&config)?;
            println!("{}", curve_summary(&run.curve));
            println!("wrote {}, {}, {}", run.files.csv.display(), run.files.svg.display(), run.files.manifest.display());
            Ok(0)
        }
        Command::GenData(a) => {
            let model = load_model(&a.model_file)?;
            let path = a.out.unwrap_or_else(|| a.out_dir.out_dir.join("quasi_real.csv"));
            write_quasi_real(&model, a.samples, a.seed, &path)?;
            println!("{} samples of {} states written to {}", a.samples, model.num_states, path.display());
            Ok(0)
        }
        Command::PsiCheck(a) => {
            let rows = psi_check(a.seed, a.samples, a.instances, a.threshold)?;
            println!("psi-check seed={} samples={} threshold={}", a.seed, a.samples, a.threshold);
            for r in &rows {
                let cross = r.z_cross.map_or_else(|| "-".to_string(), |z| format!("{z:.3}"));
                println!(
                    "instance {:>2}: max z psi1 {:.3}, psi2 {:.3}, cross {cross}  {}",
                    r.instance,
                    r.z_psi1,
                    r.z_psi2,
                    verdict(r.pass)
                );
            }
            Ok(summarize(rows.iter().all(|r| r.pass)))
        }
        Command::MgfCheck(a) => {
            let rows = mgf_check(a.seed, a.samples, a.instances, a.tolerance)?;
            println!("mgf-check seed={} samples={} tolerance={}", a.seed, a.samples, a.tolerance);
            for r in &rows {
                println!(
                    "instance {:>2}: lambda {:.4}, analytic {:.6}, mc {:.6} (rel se {:.1e}), rel err {:.2e}  {}",
                    r.instance,
                    r.lambda,
                    r.analytic,
                    r.monte_carlo,
                    r.mc_relative_se,
                    r.relative_error,
                    verdict(r.pass)
                );
            }
            Ok(summarize(rows.iter().all(|r| r.pass)))
        }
        Command::Report(a) => {
            let model = load_model(&a.model_file)?;
            print!("{}", render_report(&bound_report(&model, a.tau, &a.n, a.seed)?));
            Ok(0)
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn summarize(all: bool) -> i32 {
    println!("overall: {}", verdict(all));
    if all {
        0
    } else {
        1
    }
}

/// CSV with header `sample,y_1,..,y_K`, one quasi-real sample per row.
fn write_quasi_real(model: &crate::revarb_model::DeepModel, samples: usize, seed: u64, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "sample")?;
    for k in 1..=model.num_states {
        write!(out, ",y_{k}")?;
    }
    writeln!(out)?;
    let mut sampler = QuasiRealSampler::new(model, seed)?;
    let mut buf = vec![0.0; model.num_states];
    for i in 0..samples {
        sampler.sample_into(&mut buf);
        write!(out, "{i}")?;
        for v in &buf {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

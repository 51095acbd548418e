//! Time-series CSV files with header `t,u_1,..,u_Qx,y` and synthetic
//! series generators.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::revarb_model::Dataset;

/// Per-channel z-scoring applied at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub exo_mean: Vec<f64>,
    pub exo_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

/// A raw series and its normalized [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    /// Raw `K x Q_x` exogenous inputs.
    pub inputs: DMatrix<f64>,
    /// Raw outputs.
    pub outputs: DVector<f64>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, inputs: DMatrix<f64>, outputs: DVector<f64>) -> Result<Self> {
        let k = times.len();
        if inputs.nrows() != k || outputs.len() != k {
            return Err(Error::Validation("times, inputs and outputs must have the same length".into()));
        }
        if k == 0 {
            return Err(Error::Validation("time series is empty".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Validation(format!(
                "time column is not strictly increasing at data row {} ({} then {})",
                i + 2,
                times[i],
                times[i + 1]
            )));
        }
        Ok(Self { times, inputs, outputs })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// First `k` rows.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::Validation(format!("cannot keep {k} of {} states", self.len())));
        }
        Self::new(self.times[..k].to_vec(), self.inputs.rows(0, k).into_owned(), self.outputs.rows(0, k).into_owned())
    }

    pub fn normalization(&self) -> Normalization {
        let (exo_mean, exo_std) = (0..self.inputs.ncols())
            .map(|c| mean_std(self.inputs.column(c).iter().copied().collect::<Vec<_>>().into_iter()))
            .unzip();
        let (y_mean, y_std) = mean_std(self.outputs.iter().copied());
        Normalization { exo_mean, exo_std, y_mean, y_std }
    }

    /// Z-scored dataset with a single output sequence.
    pub fn normalized(&self) -> Result<(Dataset, Normalization)> {
        let n = self.normalization();
        let exo = DMatrix::from_fn(self.len(), self.inputs.ncols(), |r, c| {
            (self.inputs[(r, c)] - n.exo_mean[c]) / n.exo_std[c]
        });
        let y = DMatrix::from_fn(self.len(), 1, |r, _| (self.outputs[r] - n.y_mean) / n.y_std);
        Ok((Dataset::new(exo, y)?, n))
    }
}

fn parse_err(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, column, message: message.into() }
}

pub fn parse_time_series(text: &str) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(1, 1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 2 || names[0] != "t" || names[names.len() - 1] != "y" {
        return Err(parse_err(1, 1, "header must be `t,u_1,..,u_Qx,y`"));
    }
    let qx = names.len() - 2;
    for (i, name) in names[1..=qx].iter().enumerate() {
        if *name != format!("u_{}", i + 1) {
            return Err(parse_err(1, i + 2, format!("expected column `u_{}`, found `{name}`", i + 1)));
        }
    }
    let mut times = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != qx + 2 {
            return Err(parse_err(line, record.len().min(qx + 2) + 1, format!("expected {} fields, found {}", qx + 2, record.len())));
        }
        let mut vals = Vec::with_capacity(qx + 2);
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, c + 1, format!("`{cell}` is not a number (column `{}`)", names[c])))?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("non-finite value in column `{}`", names[c])));
            }
            vals.push(v);
        }
        times.push(vals[0]);
        inputs.extend_from_slice(&vals[1..=qx]);
        outputs.push(vals[qx + 1]);
    }
    let k = times.len();
    TimeSeries::new(times, DMatrix::from_row_slice(k, qx, &inputs), DVector::from_vec(outputs))
}

pub fn load_time_series(path: &Path) -> Result<TimeSeries> {
    parse_time_series(&std::fs::read_to_string(path)?)
}

/// Load a series file and z-score every channel.
pub fn load_dataset(path: &Path) -> Result<(Dataset, Normalization)> {
    load_time_series(path)?.normalized()
}

pub fn time_series_to_string(ts: &TimeSeries) -> String {
    let mut out = String::from("t");
    for i in 0..ts.inputs.ncols() {
        out.push_str(&format!(",u_{}", i + 1));
    }
    out.push_str(",y\n");
    for r in 0..ts.len() {
        out.push_str(&format!("{:?}", ts.times[r]));
        for c in 0..ts.inputs.ncols() {
            out.push_str(&format!(",{:?}", ts.inputs[(r, c)]));
        }
        out.push_str(&format!(",{:?}\n", ts.outputs[r]));
    }
    out
}

pub fn save_time_series(ts: &TimeSeries, path: &Path) -> Result<()> {
    std::fs::write(path, time_series_to_string(ts))?;
    Ok(())
}

/// Hydraulic-actuator-like series: a smoothed random valve opening drives an
/// oscillatory, saturating pressure response.
pub fn synthetic_actuator(k: usize, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![0.0_f64; k];
    let mut level = 0.0;
    let mut y = vec![0.0_f64; k];
    for t in 0..k {
        if t % 24 == 0 {
            level = rng.random_range(-1.5..1.5);
        }
        u[t] = if t == 0 { level } else { 0.8 * u[t - 1] + 0.2 * level };
        let y1 = if t >= 1 { y[t - 1] } else { 0.0 };
        let y2 = if t >= 2 { y[t - 2] } else { 0.0 };
        let u1 = if t >= 1 { u[t - 1] } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        y[t] = 1.45 * y1 - 0.6 * y2 + 0.5 * (1.5 * u1).tanh() + 0.02 * e;
    }
    let times = (0..k).map(|t| t as f64).collect();
    TimeSeries { times, inputs: DMatrix::from_column_slice(k, 1, &u), outputs: DVector::from_vec(y) }
}

/// `y_k = sin(3 u_{k-1}) + noise_std * e_k` with `u_k ~ U[-1, 1]`.
pub fn synthetic_sine(k: usize, noise_std: f64, seed: u64) -> TimeSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..k)
        .map(|t| {
            let prev = if t >= 1 { u[t - 1] } else { 0.0 };
            (3.0 * prev).sin() + noise_std * rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    TimeSeries {
        times: (0..k).map(|t| t as f64).collect(),
        inputs: DMatrix::from_column_slice(k, 1, &u),
        outputs: DVector::from_vec(y),
    }
}

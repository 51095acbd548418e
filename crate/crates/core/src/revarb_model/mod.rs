//! Deep recurrent GP with sparse-spectrum layers.
//!
//! The stack has `L` hidden layers, each with `K` latent states
//! `h_k ~ N(mu_k, lambda_k)`, and one output layer. Layer inputs are built
//! from lagged latent states and exogenous inputs (see [`input_sources`]).

mod objective;
mod params;
mod persist;
mod quasi_real;
mod train;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Error, Result};
use crate::psi_statistics::{InputDistribution, SpectralDistribution, VariationalParams};
use crate::spectral_features::{SpectralLayerHyper, SpectralPoints};

pub use objective::{
    expected_nll, expected_nll_stats, kl_q_p, layer_predictive, layer_psi_stats, objective_and_gradient,
    optimal_weight_posterior, predictive_posterior, variational_bound, variational_bound_from_parts,
    ExpectedNll, OutputStats,
};
pub use params::{pack, unpack};
pub use persist::{load_model, save_model, model_from_str, model_to_string};
pub use quasi_real::{generate_quasi_real, output_predictive, QuasiRealSampler};
pub use train::{train, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "SS")]
    Ss,
    #[serde(rename = "VSS")]
    Vss,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ss => "SS",
            Mode::Vss => "VSS",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ss" => Ok(Mode::Ss),
            "vss" => Ok(Mode::Vss),
            other => Err(Error::Validation(format!("unknown mode `{other}` (expected ss or vss)"))),
        }
    }
}

/// Time horizons `H_x` (exogenous lags) and `H_h` (latent lags).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizons {
    pub exo: usize,
    pub hidden: usize,
}

/// One GP layer: hyperparameters, fixed spectral points (used in SS mode)
/// and the variational factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub hyper: SpectralLayerHyper,
    pub points: SpectralPoints,
    pub params: VariationalParams,
}

impl Layer {
    pub fn spectral_distribution(&self, mode: Mode) -> SpectralDistribution {
        match mode {
            Mode::Ss => SpectralDistribution::fixed(&self.points),
            Mode::Vss => SpectralDistribution {
                means: self.params.spectral_means.clone(),
                vars: self.params.spectral_vars.clone(),
            },
        }
    }
}

/// Latent states of one hidden layer: `h_k ~ N(means[k], vars[k])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStates {
    pub means: DVector<f64>,
    pub vars: DVector<f64>,
}

/// Where one column of a layer input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Latent states of hidden layer `.0` (0-based).
    Latent(usize),
    /// Exogenous channel `.0`.
    Exogenous(usize),
}

/// Column `j` of the input at state `k` is `source` evaluated at `k - lag`,
/// or zero when `k - lag < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputColumn {
    pub source: Source,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    pub mode: Mode,
    pub horizons: Horizons,
    pub exo_dim: usize,
    pub num_states: usize,
    /// `L + 1` layers; the last one produces the observations.
    pub layers: Vec<Layer>,
    /// `L` hidden layers of latent states.
    pub latents: Vec<LatentStates>,
    /// `K x Q_x` fixed exogenous design.
    pub exogenous: DMatrix<f64>,
}

/// Architecture choices for [`DeepModel::init`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: Mode,
    pub num_hidden: usize,
    pub num_features: usize,
    pub horizons: Horizons,
}

/// Fixed design inputs and observed outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `K x Q_x`.
    pub exogenous: DMatrix<f64>,
    /// `K x N_bar`, one column per observed output sequence.
    pub outputs: DMatrix<f64>,
}

impl Dataset {
    pub fn new(exogenous: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        if exogenous.nrows() != outputs.nrows() {
            return Err(shape(format!(
                "exogenous has {} states, outputs have {}",
                exogenous.nrows(),
                outputs.nrows()
            )));
        }
        if outputs.ncols() == 0 || outputs.nrows() == 0 {
            return Err(Error::Validation("dataset needs at least one state and one output".into()));
        }
        if exogenous.iter().chain(outputs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("dataset contains non-finite values".into()));
        }
        Ok(Self { exogenous, outputs })
    }

    pub fn num_states(&self) -> usize {
        self.outputs.nrows()
    }
}

/// Input columns of layer `l` (0-based) in a stack with `num_hidden` hidden
/// layers.
///
/// * first hidden layer: `[h1_{k-1}..h1_{k-Hh}, x_{k-1}..x_{k-Hx}]`
/// * hidden layer `l`: `[hl_{k-1}..hl_{k-Hh}, h(l-1)_k..h(l-1)_{k-Hh+1}]`
/// * output layer: `[hL_k..hL_{k-Hh+1}]`
/// * no hidden layers: the single layer sees `[x_{k-1}..x_{k-Hx}]`
pub fn input_sources(num_hidden: usize, horizons: Horizons, exo_dim: usize, l: usize) -> Vec<InputColumn> {
    let exo_block = || {
        (1..=horizons.exo).flat_map(move |lag| {
            (0..exo_dim).map(move |c| InputColumn { source: Source::Exogenous(c), lag })
        })
    };
    let own = |layer: usize| (1..=horizons.hidden).map(move |lag| InputColumn { source: Source::Latent(layer), lag });
    let below = |layer: usize| (0..horizons.hidden).map(move |lag| InputColumn { source: Source::Latent(layer), lag });
    if num_hidden == 0 {
        exo_block().collect()
    } else if l == 0 {
        own(0).chain(exo_block()).collect()
    } else if l < num_hidden {
        own(l).chain(below(l - 1)).collect()
    } else {
        below(num_hidden - 1).collect()
    }
}

pub fn layer_input_dim(num_hidden: usize, horizons: Horizons, exo_dim: usize, l: usize) -> usize {
    input_sources(num_hidden, horizons, exo_dim, l).len()
}

impl DeepModel {
    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self, l: usize) -> usize {
        layer_input_dim(self.num_hidden(), self.horizons, self.exo_dim, l)
    }

    pub fn input_sources(&self, l: usize) -> Vec<InputColumn> {
        input_sources(self.num_hidden(), self.horizons, self.exo_dim, l)
    }

    /// Initial model for a dataset.
    ///
    /// Spectral points, spectral means and weight means are standard normal,
    /// variances are one, phases uniform, `sigma_noise = 0.1 * std(y)` and the
    /// latent means start at the (first) output sequence.
    pub fn init(spec: &ModelSpec, data: &Dataset, seed: u64) -> Result<Self> {
        if spec.num_features == 0 {
            return Err(Error::Validation("num_features must be at least 1".into()));
        }
        if spec.horizons.hidden == 0 || spec.horizons.exo == 0 {
            return Err(Error::Validation("horizons must be at least 1".into()));
        }
        let exo_dim = data.exogenous.ncols();
        if spec.num_hidden == 0 && exo_dim == 0 {
            return Err(Error::Validation("a model without hidden layers needs exogenous inputs".into()));
        }
        let k = data.num_states();
        let y = data.outputs.column(0);
        let mean = y.mean();
        let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64).sqrt();
        let sigma_noise = if std > 0.0 { 0.1 * std } else { 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = spec.num_features;
        let mut layers = Vec::with_capacity(spec.num_hidden + 1);
        for l in 0..=spec.num_hidden {
            let q = layer_input_dim(spec.num_hidden, spec.horizons, exo_dim, l);
            let phases = DVector::from_fn(m, |_, _| rng.random_range(0.0..std::f64::consts::TAU));
            let hyper = SpectralLayerHyper::with_phases(q, phases, sigma_noise)?;
            let z = DMatrix::from_fn(m, q, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut params = VariationalParams::prior(m, q);
            params.weight_mean = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            if spec.mode == Mode::Vss {
                params.spectral_means = DMatrix::from_fn(m, q, |_, _| rng.sample::<f64, _>(StandardNormal));
            }
            layers.push(Layer { hyper, points: SpectralPoints(z), params });
        }
        let latents = (0..spec.num_hidden)
            .map(|_| LatentStates {
                means: DVector::from_iterator(k, y.iter().map(|v| if std > 0.0 { (v - mean) / std } else { 0.0 })),
                vars: DVector::from_element(k, 1.0),
            })
            .collect();
        let model = Self {
            mode: spec.mode,
            horizons: spec.horizons,
            exo_dim,
            num_states: k,
            layers,
            latents,
            exogenous: data.exogenous.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_states;
        if self.layers.is_empty() {
            return Err(domain("a model needs at least one layer"));
        }
        if self.horizons.hidden == 0 || self.horizons.exo == 0 {
            return Err(domain("horizons must be at least 1"));
        }
        if self.exogenous.shape() != (k, self.exo_dim) {
            return Err(shape(format!(
                "exogenous design is {:?}, expected ({k}, {})",
                self.exogenous.shape(),
                self.exo_dim
            )));
        }
        if self.latents.len() != self.num_hidden() {
            return Err(shape("one latent sequence per hidden layer is required"));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let q = self.input_dim(l);
            if q == 0 {
                return Err(domain(format!("layer {l} has no inputs")));
            }
            layer.hyper.validate()?;
            if layer.hyper.input_dim() != q {
                return Err(shape(format!(
                    "layer {l} hyperparameters have input dimension {}, expected {q}",
                    layer.hyper.input_dim()
                )));
            }
            if layer.points.0.shape() != (layer.hyper.num_features, q) {
                return Err(shape(format!("layer {l} spectral points have the wrong shape")));
            }
            layer.params.validate(layer.hyper.num_features, q)?;
        }
        for (l, lat) in self.latents.iter().enumerate() {
            if lat.means.len() != k || lat.vars.len() != k {
                return Err(shape(format!("latent states of layer {l} must have length {k}")));
            }
            if lat.vars.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(domain("latent variances must be strictly positive"));
            }
        }
        Ok(())
    }

    /// Gaussian inputs of layer `l` for all `K` states, assembled from the
    /// lagged latent states and exogenous design with zero padding.
    pub fn build_inputs(&self, l: usize) -> Result<InputDistribution> {
        if l >= self.layers.len() {
            return Err(domain(format!("layer {l} out of range ({} layers)", self.layers.len())));
        }
        let cols = self.input_sources(l);
        let k = self.num_states;
        let mut means = DMatrix::zeros(k, cols.len());
        let mut vars = DMatrix::zeros(k, cols.len());
        for (j, col) in cols.iter().enumerate() {
            for t in col.lag..k {
                let src = t - col.lag;
                match col.source {
                    Source::Latent(h) => {
                        means[(t, j)] = self.latents[h].means[src];
                        vars[(t, j)] = self.latents[h].vars[src];
                    }
                    Source::Exogenous(c) => means[(t, j)] = self.exogenous[(src, c)],
                }
            }
        }
        InputDistribution::new(means, vars)
    }
}

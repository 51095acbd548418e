//! Plain-text model files.
//!
//! ```text
//! drgp-pac model v1
//! mode = SS
//! layer.0.lengthscales [2] = 1.0 0.5
//! layer.0.shifts [3x2] = ...        (row-major)
//! ```
//!
//! Floats are written in shortest round-trip form, so a load/save cycle
//! reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{DeepModel, Horizons, LatentStates, Layer, Mode};
use crate::error::{Error, Result};
use crate::psi_statistics::VariationalParams;
use crate::spectral_features::{SpectralLayerHyper, SpectralPoints};

const HEADER: &str = "drgp-pac model v1";

fn fmt_values<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        write!(out, " {v:?}").unwrap();
    }
}

fn put_scalar(out: &mut String, key: &str, v: impl std::fmt::Display) {
    writeln!(out, "{key} = {v}").unwrap();
}

fn put_vector(out: &mut String, key: &str, v: &DVector<f64>) {
    write!(out, "{key} [{}] =", v.len()).unwrap();
    fmt_values(out, v.iter());
    out.push('\n');
}

fn put_matrix(out: &mut String, key: &str, m: &DMatrix<f64>) {
    write!(out, "{key} [{}x{}] =", m.nrows(), m.ncols()).unwrap();
    fmt_values(out, m.transpose().iter());
    out.push('\n');
}

pub fn model_to_string(model: &DeepModel) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    put_scalar(&mut out, "mode", model.mode);
    put_scalar(&mut out, "horizon_exo", model.horizons.exo);
    put_scalar(&mut out, "horizon_hidden", model.horizons.hidden);
    put_scalar(&mut out, "exo_dim", model.exo_dim);
    put_scalar(&mut out, "num_states", model.num_states);
    put_scalar(&mut out, "num_layers", model.layers.len());
    put_matrix(&mut out, "exogenous", &model.exogenous);
    for (l, layer) in model.layers.iter().enumerate() {
        let p = format!("layer.{l}.");
        let h = &layer.hyper;
        put_scalar(&mut out, &format!("{p}num_features"), h.num_features);
        put_scalar(&mut out, &format!("{p}sigma_power"), format!("{:?}", h.sigma_power));
        put_scalar(&mut out, &format!("{p}sigma_noise"), format!("{:?}", h.sigma_noise));
        put_vector(&mut out, &format!("{p}lengthscales"), &h.lengthscales);
        put_vector(&mut out, &format!("{p}spectral_mean"), &h.spectral_mean);
        put_matrix(&mut out, &format!("{p}shifts"), &h.shifts);
        put_vector(&mut out, &format!("{p}phases"), &h.phases);
        put_matrix(&mut out, &format!("{p}points"), &layer.points.0);
        put_vector(&mut out, &format!("{p}weight_mean"), &layer.params.weight_mean);
        put_matrix(&mut out, &format!("{p}weight_cov"), &layer.params.weight_cov);
        put_matrix(&mut out, &format!("{p}spectral_means"), &layer.params.spectral_means);
        put_matrix(&mut out, &format!("{p}spectral_vars"), &layer.params.spectral_vars);
    }
    for (l, lat) in model.latents.iter().enumerate() {
        put_vector(&mut out, &format!("latent.{l}.means"), &lat.means);
        put_vector(&mut out, &format!("latent.{l}.vars"), &lat.vars);
    }
    out
}

struct Entry {
    line: usize,
    shape: Option<Vec<usize>>,
    value: String,
}

struct Doc(BTreeMap<String, Entry>);

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::ModelFormat(format!("line {line}: {}", msg.into()))
}

impl Doc {
    fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => return Err(Error::ModelFormat(format!("missing header `{HEADER}`"))),
        }
        let mut map = BTreeMap::new();
        for (i, raw) in lines {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (lhs, rhs) = t.split_once('=').ok_or_else(|| bad(line, "expected `key = value`"))?;
            let lhs = lhs.trim();
            let (key, shape) = match lhs.split_once('[') {
                None => (lhs.to_string(), None),
                Some((k, rest)) => {
                    let dims = rest.strip_suffix(']').ok_or_else(|| bad(line, "unterminated shape"))?;
                    let shape = dims
                        .split('x')
                        .map(|d| d.trim().parse::<usize>().map_err(|_| bad(line, format!("bad shape `{dims}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    (k.trim().to_string(), Some(shape))
                }
            };
            if map.insert(key.clone(), Entry { line, shape, value: rhs.trim().to_string() }).is_some() {
                return Err(bad(line, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self(map))
    }

    fn get(&self, key: &str) -> Result<&Entry> {
        self.0.get(key).ok_or_else(|| Error::ModelFormat(format!("missing key `{key}`")))
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let e = self.get(key)?;
        e.value.parse().map_err(|_| bad(e.line, format!("cannot parse `{}` for `{key}`", e.value)))
    }

    fn values(&self, key: &str, expected: &[usize]) -> Result<Vec<f64>> {
        let e = self.get(key)?;
        if e.shape.as_deref() != Some(expected) {
            return Err(bad(e.line, format!("`{key}` has shape {:?}, expected {:?}", e.shape, expected)));
        }
        let vals = e
            .value
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad(e.line, format!("bad number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != expected.iter().product::<usize>() {
            return Err(bad(e.line, format!("`{key}` has {} values, expected {}", vals.len(), expected.iter().product::<usize>())));
        }
        Ok(vals)
    }

    fn vector(&self, key: &str, n: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.values(key, &[n])?))
    }

    fn matrix(&self, key: &str, r: usize, c: usize) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_row_slice(r, c, &self.values(key, &[r, c])?))
    }

    fn shape_of(&self, key: &str) -> Result<Vec<usize>> {
        let e = self.get(key)?;
        e.shape.clone().ok_or_else(|| bad(e.line, format!("`{key}` needs a shape")))
    }
}

pub fn model_from_str(text: &str) -> Result<DeepModel> {
    let doc = Doc::parse(text)?;
    let mode: Mode = doc.scalar::<String>("mode")?.parse()?;
    let horizons = Horizons { exo: doc.scalar("horizon_exo")?, hidden: doc.scalar("horizon_hidden")? };
    let exo_dim: usize = doc.scalar("exo_dim")?;
    let k: usize = doc.scalar("num_states")?;
    let num_layers: usize = doc.scalar("num_layers")?;
    if num_layers == 0 {
        return Err(Error::ModelFormat("num_layers must be at least 1".into()));
    }
    let exogenous = doc.matrix("exogenous", k, exo_dim)?;
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let p = format!("layer.{l}.");
        let m: usize = doc.scalar(&format!("{p}num_features"))?;
        let q = doc.shape_of(&format!("{p}lengthscales"))?.first().copied().unwrap_or(0);
        let hyper = SpectralLayerHyper {
            num_features: m,
            sigma_power: doc.scalar(&format!("{p}sigma_power"))?,
            lengthscales: doc.vector(&format!("{p}lengthscales"), q)?,
            spectral_mean: doc.vector(&format!("{p}spectral_mean"), q)?,
            shifts: doc.matrix(&format!("{p}shifts"), m, q)?,
            phases: doc.vector(&format!("{p}phases"), m)?,
            sigma_noise: doc.scalar(&format!("{p}sigma_noise"))?,
        };
        let params = VariationalParams {
            weight_mean: doc.vector(&format!("{p}weight_mean"), m)?,
            weight_cov: doc.matrix(&format!("{p}weight_cov"), m, m)?,
            spectral_means: doc.matrix(&format!("{p}spectral_means"), m, q)?,
            spectral_vars: doc.matrix(&format!("{p}spectral_vars"), m, q)?,
        };
        let points = SpectralPoints(doc.matrix(&format!("{p}points"), m, q)?);
        layers.push(Layer { hyper, points, params });
    }
    let latents = (0..num_layers - 1)
        .map(|l| {
            Ok(LatentStates {
                means: doc.vector(&format!("latent.{l}.means"), k)?,
                vars: doc.vector(&format!("latent.{l}.vars"), k)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = DeepModel { mode, horizons, exo_dim, num_states: k, layers, latents, exogenous };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &DeepModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<DeepModel> {
    model_from_str(&std::fs::read_to_string(path)?)
}

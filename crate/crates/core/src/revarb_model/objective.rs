//! Expected negative log-likelihood, KL divergence, the variational bound
//! and its gradient.
//!
//! For a layer with targets `t_i` (the observations for the output layer,
//! the latent means for hidden layers), summed over `N_bar` observations:
//!
//! ```text
//! R = sum_i |t_i|^2 - 2 (sum_i t_i)^T Psi1 m + N_bar (m^T Psi2 m + tr(Psi2 s)) [+ N_bar 1^T lambda_h]
//! D = R / (2 sigma^2) + N_bar (K / 2) log(2 pi sigma^2)
//! ```
//!
//! The bracketed term appears for hidden layers, where the target itself is
//! uncertain.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::params::{LayerVec, ModelVec};
use super::{DeepModel, Mode, Source};
use crate::error::{domain, shape, Result};
use crate::linalg::{is_psd, spd_inverse, spd_logdet, symmetrize};
use crate::psi_statistics::{InputDistribution, PreparedFeatures, PsiStats};
use crate::trig_expectation::{char_fn_backprop, TermGrad};

/// Sufficient statistics of `N_bar` observed output sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStats {
    pub count: usize,
    /// `sum_i y_i`.
    pub sum: DVector<f64>,
    /// `sum_i |y_i|^2`.
    pub sum_sq: f64,
}

impl OutputStats {
    pub fn empty(num_states: usize) -> Self {
        Self { count: 0, sum: DVector::zeros(num_states), sum_sq: 0.0 }
    }

    pub fn single(y: &DVector<f64>) -> Self {
        let mut s = Self::empty(y.len());
        s.push(y.as_slice());
        s
    }

    /// Statistics of the columns of a `K x N_bar` matrix.
    pub fn from_columns(y: &DMatrix<f64>) -> Self {
        let mut s = Self::empty(y.nrows());
        for c in y.column_iter() {
            s.push(c.as_slice());
        }
        s
    }

    pub fn push(&mut self, y: &[f64]) {
        self.count += 1;
        for (acc, v) in self.sum.iter_mut().zip(y) {
            *acc += v;
        }
        self.sum_sq += y.iter().map(|v| v * v).sum::<f64>();
    }
}

fn prepared(model: &DeepModel, l: usize) -> Result<(InputDistribution, PreparedFeatures)> {
    let inputs = model.build_inputs(l)?;
    let layer = &model.layers[l];
    let feats = PreparedFeatures::new(&layer.spectral_distribution(model.mode), &layer.hyper)?;
    Ok((inputs, feats))
}

/// `Psi1`, `Psi2` and the per-state `psi2_k` of layer `l`.
pub fn layer_psi_stats(model: &DeepModel, l: usize) -> Result<PsiStats> {
    let inputs = model.build_inputs(l)?;
    let layer = &model.layers[l];
    PsiStats::compute(&inputs, &layer.spectral_distribution(model.mode), &layer.hyper)
}

/// Predictive mean `psi1_k m` and variance
/// `sigma^2 + m^T (psi2_k - psi1_k^T psi1_k) m + tr(psi2_k s)` of layer `l`
/// at state `k`.
pub fn predictive_posterior(model: &DeepModel, l: usize, k: usize) -> Result<(f64, f64)> {
    if k >= model.num_states {
        return Err(domain(format!("state {k} out of range (K = {})", model.num_states)));
    }
    let (inputs, feats) = prepared(model, l)?;
    let (means, vars) = inputs.rows();
    Ok(predictive_at(&feats, model, l, &means[k], &vars[k]))
}

fn predictive_at(feats: &PreparedFeatures, model: &DeepModel, l: usize, mean: &[f64], var: &[f64]) -> (f64, f64) {
    let layer = &model.layers[l];
    let m = &layer.params.weight_mean;
    let s = &layer.params.weight_cov;
    let psi1 = DVector::from_fn(m.len(), |j, _| feats.mean_feature(j, mean, var));
    let psi2 = feats.second_moment(mean, var);
    let mu = psi1.dot(m);
    let noise_free = (&psi2 * m).dot(m) - mu * mu + (&psi2 * s).trace();
    (mu, layer.hyper.sigma_noise.powi(2) + noise_free.max(0.0))
}

/// Predictive means and variances of layer `l` at all states.
pub fn layer_predictive(model: &DeepModel, l: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    let (inputs, feats) = prepared(model, l)?;
    let (means, vars) = inputs.rows();
    let out: Vec<(f64, f64)> = (0..model.num_states)
        .into_par_iter()
        .map(|k| predictive_at(&feats, model, l, &means[k], &vars[k]))
        .collect();
    Ok((
        DVector::from_iterator(out.len(), out.iter().map(|p| p.0)),
        DVector::from_iterator(out.len(), out.iter().map(|p| p.1)),
    ))
}

/// Target statistics of layer `l`: `(sum_i t_i, sum_i |t_i|^2, extra)`.
fn layer_targets(model: &DeepModel, l: usize, stats: &OutputStats) -> (DVector<f64>, f64, f64) {
    let n = stats.count as f64;
    if l == model.num_hidden() {
        (stats.sum.clone(), stats.sum_sq, 0.0)
    } else {
        let lat = &model.latents[l];
        (&lat.means * n, n * lat.means.norm_squared(), n * lat.vars.sum())
    }
}

fn layer_data_term(model: &DeepModel, l: usize, psi: &PsiStats, stats: &OutputStats) -> f64 {
    let layer = &model.layers[l];
    let (tsum, t2, extra) = layer_targets(model, l, stats);
    let n = stats.count as f64;
    let m = &layer.params.weight_mean;
    let w = m * m.transpose() + &layer.params.weight_cov;
    let sigma2 = layer.hyper.sigma_noise.powi(2);
    let r = t2 - 2.0 * tsum.dot(&(&psi.psi1 * m)) + n * psi.psi2.component_mul(&w).sum() + extra;
    r / (2.0 * sigma2) + n * 0.5 * model.num_states as f64 * (TAU * sigma2).ln()
}

/// `E_Q[-log p(y | theta, X)]` for one observed output sequence.
pub fn expected_nll(model: &DeepModel, y: &DVector<f64>) -> Result<f64> {
    if y.len() != model.num_states {
        return Err(shape(format!("observations have length {}, expected {}", y.len(), model.num_states)));
    }
    expected_nll_stats(model, &OutputStats::single(y))
}

/// `sum_i E_Q[-log p(y_i | theta, X)]` from sufficient statistics.
pub fn expected_nll_stats(model: &DeepModel, stats: &OutputStats) -> Result<f64> {
    if stats.sum.len() != model.num_states {
        return Err(shape("output statistics do not match the number of states"));
    }
    let mut total = 0.0;
    for l in 0..model.layers.len() {
        let psi = layer_psi_stats(model, l)?;
        total += layer_data_term(model, l, &psi, stats);
    }
    Ok(total)
}

/// `expected_nll_stats` with the per-layer Psi statistics computed once, for
/// evaluating many output statistics against a fixed model.
pub struct ExpectedNll<'a> {
    model: &'a DeepModel,
    psi: Vec<PsiStats>,
}

impl<'a> ExpectedNll<'a> {
    pub fn new(model: &'a DeepModel) -> Result<Self> {
        let psi = (0..model.layers.len()).map(|l| layer_psi_stats(model, l)).collect::<Result<_>>()?;
        Ok(Self { model, psi })
    }

    pub fn value(&self, stats: &OutputStats) -> Result<f64> {
        if stats.sum.len() != self.model.num_states {
            return Err(shape("output statistics do not match the number of states"));
        }
        Ok(self.psi.iter().enumerate().map(|(l, psi)| layer_data_term(self.model, l, psi, stats)).sum())
    }
}

fn weight_kl(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if !is_psd(cov) {
        return Err(domain("weight covariance is not positive semidefinite"));
    }
    let logdet = match spd_logdet(cov) {
        Ok(v) => v,
        Err(_) => return Ok(f64::INFINITY),
    };
    Ok(0.5 * (cov.trace() + mean.norm_squared() - mean.len() as f64 - logdet))
}

fn diag_kl(means: impl Iterator<Item = f64>, vars: impl Iterator<Item = f64>) -> f64 {
    means.zip(vars).map(|(m, v)| 0.5 * (v + m * m - 1.0 - v.ln())).sum()
}

/// `KL(Q || P)` against standard-normal priors on the weights, the spectral
/// points (VSS only) and the latent states.
pub fn kl_q_p(model: &DeepModel) -> Result<f64> {
    let mut kl = 0.0;
    for layer in &model.layers {
        kl += weight_kl(&layer.params.weight_mean, &layer.params.weight_cov)?;
        if model.mode == Mode::Vss {
            kl += diag_kl(
                layer.params.spectral_means.iter().copied(),
                layer.params.spectral_vars.iter().copied(),
            );
        }
    }
    for lat in &model.latents {
        kl += diag_kl(lat.means.iter().copied(), lat.vars.iter().copied());
    }
    Ok(kl)
}

/// `L_REV = -(sum_i E_Q[-log p(y_i)] + KL)` for the columns of `y`.
pub fn variational_bound(model: &DeepModel, y: &DMatrix<f64>) -> Result<f64> {
    variational_bound_from_parts(model, &OutputStats::from_columns(y))
}

/// `L_REV` from output sufficient statistics.
pub fn variational_bound_from_parts(model: &DeepModel, stats: &OutputStats) -> Result<f64> {
    Ok(-(expected_nll_stats(model, stats)? + kl_q_p(model)?))
}

/// Closed-form weight posterior of layer `l` for the given target sum over
/// `count` observations:
///
/// ```text
/// A = count * Psi2 + sigma^2 I,   m* = A^-1 Psi1^T target_sum,   s* = sigma^2 A^-1
/// ```
pub fn optimal_weight_posterior(
    model: &DeepModel,
    l: usize,
    target_sum: &DVector<f64>,
    count: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if target_sum.len() != model.num_states {
        return Err(shape("target length does not match the number of states"));
    }
    let psi = layer_psi_stats(model, l)?;
    Ok(optimal_from_psi(&psi, model.layers[l].hyper.sigma_noise, target_sum, count))
}

pub(crate) fn optimal_from_psi(
    psi: &PsiStats,
    sigma_noise: f64,
    target_sum: &DVector<f64>,
    count: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = psi.psi2.nrows();
    let sigma2 = sigma_noise * sigma_noise;
    let mut a = &psi.psi2 * count + DMatrix::identity(m, m) * sigma2;
    symmetrize(&mut a);
    let a_inv = spd_inverse(&a).expect("count * Psi2 + sigma^2 I is positive definite");
    let mean = &a_inv * (psi.psi1.transpose() * target_sum);
    let mut cov = a_inv * sigma2;
    symmetrize(&mut cov);
    (mean, cov)
}

/// Replace every layer's weight posterior by its closed-form optimum.
pub(crate) fn refresh_weights(model: &mut DeepModel, stats: &OutputStats) -> Result<()> {
    for l in 0..model.layers.len() {
        let (tsum, _, _) = layer_targets(model, l, stats);
        let psi = layer_psi_stats(model, l)?;
        let (m, s) = optimal_from_psi(&psi, model.layers[l].hyper.sigma_noise, &tsum, stats.count as f64);
        model.layers[l].params.weight_mean = m;
        model.layers[l].params.weight_cov = s;
    }
    Ok(())
}

/// Gradient sinks shared by all states of one layer.
struct Acc {
    q: usize,
    d_nu: Vec<f64>,
    d_beta: Vec<f64>,
    d_shift: Vec<f64>,
    d_phase: Vec<f64>,
    d_log_sigma_power: f64,
    psi2: Vec<f64>,
    rows: Vec<StateRow>,
}

/// `(state, psi1 row, d/d input mean, d/d input variance)`.
type StateRow = (usize, Vec<f64>, Vec<f64>, Vec<f64>);

impl Acc {
    fn new(m: usize, q: usize) -> Self {
        Self {
            q,
            d_nu: vec![0.0; m * q],
            d_beta: vec![0.0; m * q],
            d_shift: vec![0.0; m * q],
            d_phase: vec![0.0; m],
            d_log_sigma_power: 0.0,
            psi2: vec![0.0; m * m],
            rows: Vec::new(),
        }
    }

    fn merge(mut self, other: Self) -> Self {
        let add = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.d_nu, &other.d_nu);
        add(&mut self.d_beta, &other.d_beta);
        add(&mut self.d_shift, &other.d_shift);
        add(&mut self.d_phase, &other.d_phase);
        add(&mut self.psi2, &other.psi2);
        self.d_log_sigma_power += other.d_log_sigma_power;
        self.rows.extend(other.rows);
        self
    }
}

fn one_grad<'a>(nu: &'a mut [f64], beta: &'a mut [f64], shift: &'a mut [f64], a: usize, q: usize) -> [TermGrad<'a>; 1] {
    let r = a * q..(a + 1) * q;
    [TermGrad { nu: &mut nu[r.clone()], beta: &mut beta[r.clone()], shift: &mut shift[r] }]
}

fn pair_grad<'a>(
    nu: &'a mut [f64],
    beta: &'a mut [f64],
    shift: &'a mut [f64],
    a: usize,
    b: usize,
    q: usize,
) -> [TermGrad<'a>; 2] {
    debug_assert!(a < b);
    let split = |v: &'a mut [f64]| {
        let (lo, hi) = v.split_at_mut(b * q);
        (&mut lo[a * q..(a + 1) * q], &mut hi[..q])
    };
    let (na, nb) = split(nu);
    let (ba, bb) = split(beta);
    let (sa, sb) = split(shift);
    [TermGrad { nu: na, beta: ba, shift: sa }, TermGrad { nu: nb, beta: bb, shift: sb }]
}

/// Values of `psi1_k`, `psi2_k` and the backpropagated gradient of
/// `sum_a g1[a] psi1_k[a] + sum_ab g2[a,b] psi2_k[a,b]` for one state.
fn state_pass(
    f: &PreparedFeatures,
    k: usize,
    mean: &[f64],
    var: &[f64],
    g1: &[f64],
    g2: &DMatrix<f64>,
    acc: &mut Acc,
) {
    let m = f.num_features();
    let q = acc.q;
    let amp = f.amp;
    let half = 0.5 * amp * amp;
    let mut psi1 = vec![0.0; m];
    let mut dmean = vec![0.0; q];
    let mut dvar = vec![0.0; q];
    for a in 0..m {
        let mut tg = one_grad(&mut acc.d_nu, &mut acc.d_beta, &mut acc.d_shift, a, q);
        let (c, pg) = char_fn_backprop(&[f.term(a, 1.0)], mean, var, f.phase[a], g1[a] * amp, &mut tg, &mut dmean, &mut dvar);
        let v = amp * c.re;
        psi1[a] = v;
        acc.d_phase[a] += pg;
        acc.d_log_sigma_power += g1[a] * v;
    }
    for a in 0..m {
        let gaa = g2[(a, a)];
        let mut tg = one_grad(&mut acc.d_nu, &mut acc.d_beta, &mut acc.d_shift, a, q);
        let (c, pg) = char_fn_backprop(&[f.term(a, 2.0)], mean, var, 2.0 * f.phase[a], gaa * half, &mut tg, &mut dmean, &mut dvar);
        let v = half * (1.0 + c.re);
        acc.psi2[a * m + a] += v;
        acc.d_phase[a] += 2.0 * pg;
        acc.d_log_sigma_power += 2.0 * gaa * v;
        for b in (a + 1)..m {
            let w = 2.0 * g2[(a, b)] * half;
            let mut tg = pair_grad(&mut acc.d_nu, &mut acc.d_beta, &mut acc.d_shift, a, b, q);
            let (cd, pd) = char_fn_backprop(
                &[f.term(a, 1.0), f.term(b, -1.0)],
                mean,
                var,
                f.phase[a] - f.phase[b],
                w,
                &mut tg,
                &mut dmean,
                &mut dvar,
            );
            let mut tg = pair_grad(&mut acc.d_nu, &mut acc.d_beta, &mut acc.d_shift, a, b, q);
            let (cs, ps) = char_fn_backprop(
                &[f.term(a, 1.0), f.term(b, 1.0)],
                mean,
                var,
                f.phase[a] + f.phase[b],
                w,
                &mut tg,
                &mut dmean,
                &mut dvar,
            );
            let v = half * (cd.re + cs.re);
            acc.psi2[a * m + b] += v;
            acc.psi2[b * m + a] += v;
            acc.d_phase[a] += pd + ps;
            acc.d_phase[b] += ps - pd;
            acc.d_log_sigma_power += 4.0 * g2[(a, b)] * v;
        }
    }
    acc.rows.push((k, psi1, dmean, dvar));
}

/// Negative bound `-L_REV` and its gradient in [`super::pack`] coordinates.
pub fn objective_and_gradient(model: &DeepModel, stats: &OutputStats) -> Result<(f64, Vec<f64>)> {
    if stats.sum.len() != model.num_states {
        return Err(shape("output statistics do not match the number of states"));
    }
    let theta = ModelVec::from_model(model)?;
    let mut grad = ModelVec::zeros_like(&theta);
    let n = stats.count as f64;
    let k_states = model.num_states;
    let mut value = 0.0;

    for (l, layer) in model.layers.iter().enumerate() {
        let (inputs, feats) = prepared(model, l)?;
        let (means, vars) = inputs.rows();
        let q = inputs.dim();
        let mm = layer.hyper.num_features;
        let sigma2 = layer.hyper.sigma_noise.powi(2);
        let m = &layer.params.weight_mean;
        let s = &layer.params.weight_cov;
        let w = m * m.transpose() + s;
        let (tsum, t2, extra) = layer_targets(model, l, stats);

        let g2 = &w * (n / (2.0 * sigma2));
        let acc = (0..k_states)
            .into_par_iter()
            .fold(
                || Acc::new(mm, q),
                |mut acc, k| {
                    let g1: Vec<f64> = m.iter().map(|mj| -tsum[k] * mj / sigma2).collect();
                    state_pass(&feats, k, &means[k], &vars[k], &g1, &g2, &mut acc);
                    acc
                },
            )
            .reduce(|| Acc::new(mm, q), Acc::merge);

        let mut psi1 = DMatrix::zeros(k_states, mm);
        let mut d_in_mean = DMatrix::zeros(k_states, q);
        let mut d_in_var = DMatrix::zeros(k_states, q);
        for (k, row, dm, dv) in &acc.rows {
            for j in 0..mm {
                psi1[(*k, j)] = row[j];
            }
            for j in 0..q {
                d_in_mean[(*k, j)] = dm[j];
                d_in_var[(*k, j)] = dv[j];
            }
        }
        let psi2 = DMatrix::from_row_slice(mm, mm, &acc.psi2);

        let psi1_m = &psi1 * m;
        let r = t2 - 2.0 * tsum.dot(&psi1_m) + n * psi2.component_mul(&w).sum() + extra;
        value += r / (2.0 * sigma2) + n * 0.5 * k_states as f64 * (TAU * sigma2).ln();

        let gl: &mut LayerVec = &mut grad.layers[l];
        gl.log_sigma_noise += -r / sigma2 + n * k_states as f64;
        gl.log_sigma_power += acc.d_log_sigma_power;
        gl.weight_mean += (-(psi1.transpose() * &tsum) + &psi2 * m * n) / sigma2;
        let g_s = &psi2 * (n / (2.0 * sigma2));

        // frequency moments -> spectral means/vars, lengthscales, p
        let hyper = &layer.hyper;
        let spectral = layer.spectral_distribution(model.mode);
        for a in 0..mm {
            for j in 0..q {
                let dn = acc.d_nu[a * q + j];
                let db = acc.d_beta[a * q + j];
                let lq = hyper.lengthscales[j];
                let alpha = spectral.means[(a, j)];
                let beta_z = spectral.vars[(a, j)];
                gl.spectral_means[(a, j)] += dn / lq;
                gl.log_lengthscales[j] += lq * (-dn * alpha / (lq * lq) - db * 2.0 * beta_z / (lq * lq * lq));
                gl.spectral_mean[j] += TAU * dn;
                if let Some(lv) = gl.log_spectral_vars.as_mut() {
                    lv[(a, j)] += beta_z * db / (lq * lq);
                }
                gl.shifts[(a, j)] += acc.d_shift[a * q + j];
            }
            gl.phases[a] += acc.d_phase[a];
        }

        // weight covariance through its Cholesky factor
        let chol = &theta.layers[l].weight_chol;
        let kl_s = (DMatrix::identity(mm, mm) - spd_inverse(s).unwrap_or_else(|_| DMatrix::zeros(mm, mm))) * 0.5;
        let d_l = (&g_s + &kl_s) * chol * 2.0;
        for c in 0..mm {
            for rr in c..mm {
                gl.weight_chol[(rr, c)] += d_l[(rr, c)];
            }
        }

        // hidden-layer targets
        if l < model.num_hidden() {
            let lat = &model.latents[l];
            grad.latent_means[l] += (&lat.means - &psi1_m) * (n / sigma2);
            for t in 0..k_states {
                grad.latent_log_vars[l][t] += lat.vars[t] * n / (2.0 * sigma2);
            }
        }

        // inputs -> latent states
        for (j, col) in model.input_sources(l).iter().enumerate() {
            if let Source::Latent(h) = col.source {
                for t in col.lag..k_states {
                    let src = t - col.lag;
                    grad.latent_means[h][src] += d_in_mean[(t, j)];
                    grad.latent_log_vars[h][src] += model.latents[h].vars[src] * d_in_var[(t, j)];
                }
            }
        }
    }

    value += kl_q_p(model)?;
    for (l, layer) in model.layers.iter().enumerate() {
        grad.layers[l].weight_mean += &layer.params.weight_mean;
        if model.mode == Mode::Vss {
            grad.layers[l].spectral_means += &layer.params.spectral_means;
            if let Some(lv) = grad.layers[l].log_spectral_vars.as_mut() {
                *lv += layer.params.spectral_vars.map(|b| 0.5 * (b - 1.0));
            }
        }
    }
    for (h, lat) in model.latents.iter().enumerate() {
        grad.latent_means[h] += &lat.means;
        grad.latent_log_vars[h] += lat.vars.map(|v| 0.5 * (v - 1.0));
    }
    Ok((value, grad.flatten()))
}

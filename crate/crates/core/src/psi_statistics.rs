//! Expectations of the sparse-spectrum features under Gaussian uncertainty
//! in both the spectral points and the layer inputs.
//!
//! * `Psi1[k, m] = E[phi_m(x_k)]`
//! * `Psi2 = sum_k E[phi(x_k) phi(x_k)^T]`
//! * `Psi_{k,k'} = E[phi(x_k) phi(x_k')^T]` for two distinct states sharing
//!   the same random spectral points (variational spectrum only)
//!
//! Products of cosines are reduced with `cos A cos B = (cos(A-B) + cos(A+B)) / 2`
//! and every resulting term is an exact Gaussian characteristic function
//! (see [`crate::trig_expectation`]). [`monte_carlo_psi`] is the sampling
//! oracle these closed forms are checked against.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, shape, Error, Result};
use crate::spectral_features::{SpectralLayerHyper, SpectralPoints};
use crate::trig_expectation::{char_fn, Term};

/// Independent Gaussian inputs, one row per state: `x_k ~ N(means[k], diag(vars[k]))`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    pub means: DMatrix<f64>,
    pub vars: DMatrix<f64>,
}

impl InputDistribution {
    pub fn new(means: DMatrix<f64>, vars: DMatrix<f64>) -> Result<Self> {
        if means.shape() != vars.shape() {
            return Err(shape(format!(
                "input means {:?} and variances {:?} differ in shape",
                means.shape(),
                vars.shape()
            )));
        }
        if vars.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(domain("input variances must be finite and non-negative"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(domain("input means must be finite"));
        }
        Ok(Self { means, vars })
    }

    pub fn deterministic(x: DMatrix<f64>) -> Self {
        let vars = DMatrix::zeros(x.nrows(), x.ncols());
        Self { means: x, vars }
    }

    pub fn num_states(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub(crate) fn rows(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let to_rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|r| m.row(r).iter().copied().collect())
                .collect::<Vec<Vec<f64>>>()
        };
        (to_rows(&self.means), to_rows(&self.vars))
    }
}

/// Distribution of the spectral points: `z_m ~ N(means[m], diag(vars[m]))`.
/// Fixed points have zero variance.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDistribution {
    pub means: DMatrix<f64>,
    pub vars: DMatrix<f64>,
}

impl SpectralDistribution {
    pub fn fixed(points: &SpectralPoints) -> Self {
        let z = points.matrix().clone();
        let vars = DMatrix::zeros(z.nrows(), z.ncols());
        Self { means: z, vars }
    }

    pub fn variational(means: DMatrix<f64>, vars: DMatrix<f64>) -> Result<Self> {
        if means.shape() != vars.shape() {
            return Err(shape("spectral means and variances differ in shape"));
        }
        if vars.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(domain("spectral variances must be finite and non-negative"));
        }
        Ok(Self { means, vars })
    }
}

/// Variational factors of one layer: `a ~ N(m, s)` over the feature weights
/// and `z_m ~ N(alpha_m, diag(beta_m))` over the spectral points.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub weight_mean: DVector<f64>,
    pub weight_cov: DMatrix<f64>,
    pub spectral_means: DMatrix<f64>,
    pub spectral_vars: DMatrix<f64>,
}

impl VariationalParams {
    /// Prior-matching factors: `m = 0`, `s = I`, `alpha = 0`, `beta = 1`.
    pub fn prior(num_features: usize, input_dim: usize) -> Self {
        Self {
            weight_mean: DVector::zeros(num_features),
            weight_cov: DMatrix::identity(num_features, num_features),
            spectral_means: DMatrix::zeros(num_features, input_dim),
            spectral_vars: DMatrix::from_element(num_features, input_dim, 1.0),
        }
    }

    pub fn validate(&self, num_features: usize, input_dim: usize) -> Result<()> {
        if self.weight_mean.len() != num_features
            || self.weight_cov.shape() != (num_features, num_features)
        {
            return Err(shape("weight posterior does not match the feature count"));
        }
        if self.spectral_means.shape() != (num_features, input_dim)
            || self.spectral_vars.shape() != (num_features, input_dim)
        {
            return Err(shape("spectral posterior does not match (M, Q)"));
        }
        if self.spectral_vars.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(domain("spectral variances must be strictly positive"));
        }
        if (&self.weight_cov - self.weight_cov.transpose()).abs().max()
            > 1e-9 * self.weight_cov.abs().max().max(1.0)
        {
            return Err(domain("weight covariance must be symmetric"));
        }
        if !crate::linalg::is_psd(&self.weight_cov) {
            return Err(domain("weight covariance must be positive semidefinite"));
        }
        Ok(())
    }
}

/// Feature parameters in frequency space, laid out row-per-feature.
pub(crate) struct PreparedFeatures {
    pub nu: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub shift: Vec<Vec<f64>>,
    pub phase: Vec<f64>,
    pub amp: f64,
}

impl PreparedFeatures {
    pub fn new(spectral: &SpectralDistribution, hyper: &SpectralLayerHyper) -> Result<Self> {
        hyper.validate()?;
        let m = hyper.num_features;
        let q = hyper.input_dim();
        if spectral.means.shape() != (m, q) || spectral.vars.shape() != (m, q) {
            return Err(shape(format!(
                "spectral distribution is {:?}, expected ({m}, {q})",
                spectral.means.shape()
            )));
        }
        let (nu, beta) = hyper.frequency_moments(&spectral.means, Some(&spectral.vars));
        let rows = |mat: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m).map(|r| mat.row(r).iter().copied().collect()).collect()
        };
        Ok(Self {
            nu: rows(&nu),
            beta: rows(&beta),
            shift: rows(&hyper.shifts),
            phase: hyper.phases.iter().copied().collect(),
            amp: hyper.amplitude(),
        })
    }

    pub fn num_features(&self) -> usize {
        self.phase.len()
    }

    pub fn term(&self, m: usize, scale: f64) -> Term<'_> {
        Term {
            scale,
            nu: &self.nu[m],
            beta: &self.beta[m],
            shift: &self.shift[m],
        }
    }

    /// `E[phi_m(x)]` for one input distribution.
    pub fn mean_feature(&self, m: usize, mean: &[f64], var: &[f64]) -> f64 {
        self.amp * char_fn(&[self.term(m, 1.0)], mean, var, self.phase[m]).re
    }

    /// `E[phi(x) phi(x)^T]` for one input distribution.
    pub fn second_moment(&self, mean: &[f64], var: &[f64]) -> DMatrix<f64> {
        let mm = self.num_features();
        let half = 0.5 * self.amp * self.amp;
        let mut out = DMatrix::zeros(mm, mm);
        for a in 0..mm {
            let sum = char_fn(&[self.term(a, 2.0)], mean, var, 2.0 * self.phase[a]).re;
            out[(a, a)] = half * (1.0 + sum);
            for b in (a + 1)..mm {
                let diff = char_fn(
                    &[self.term(a, 1.0), self.term(b, -1.0)],
                    mean,
                    var,
                    self.phase[a] - self.phase[b],
                )
                .re;
                let sum = char_fn(
                    &[self.term(a, 1.0), self.term(b, 1.0)],
                    mean,
                    var,
                    self.phase[a] + self.phase[b],
                )
                .re;
                let v = half * (diff + sum);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }

    /// `E[phi_m(x) phi_m(x')]` for independent inputs sharing the same `z_m`.
    pub fn cross_diagonal(&self, m: usize, mean_a: &[f64], var_a: &[f64], mean_b: &[f64], var_b: &[f64]) -> f64 {
        let q = mean_a.len();
        let var: Vec<f64> = (0..q).map(|j| var_a[j] + var_b[j]).collect();
        let diff_mean: Vec<f64> = (0..q).map(|j| mean_a[j] - mean_b[j]).collect();
        let sum_mean: Vec<f64> = (0..q).map(|j| mean_a[j] + mean_b[j]).collect();
        let zero = vec![0.0; q];
        let twice_shift: Vec<f64> = self.shift[m].iter().map(|u| 2.0 * u).collect();
        // A - A' = w^T (x - x')
        let diff = char_fn(
            &[Term { scale: 1.0, nu: &self.nu[m], beta: &self.beta[m], shift: &zero }],
            &diff_mean,
            &var,
            0.0,
        )
        .re;
        // A + A' = w^T (x + x' - 2u) + 2b
        let sum = char_fn(
            &[Term { scale: 1.0, nu: &self.nu[m], beta: &self.beta[m], shift: &twice_shift }],
            &sum_mean,
            &var,
            2.0 * self.phase[m],
        )
        .re;
        0.5 * self.amp * self.amp * (diff + sum)
    }
}

/// Analytic statistics of one layer.
#[derive(Debug, Clone)]
pub struct PsiStats {
    pub psi1: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
    /// Per-state second moments `psi2_k`; their sum is `psi2`.
    pub psi2_rows: Vec<DMatrix<f64>>,
}

impl PsiStats {
    pub fn compute(
        inputs: &InputDistribution,
        spectral: &SpectralDistribution,
        hyper: &SpectralLayerHyper,
    ) -> Result<Self> {
        let feats = prepare(inputs, spectral, hyper)?;
        let (means, vars) = inputs.rows();
        let k = inputs.num_states();
        let m = hyper.num_features;
        let per_state: Vec<(Vec<f64>, DMatrix<f64>)> = (0..k)
            .into_par_iter()
            .map(|r| {
                let row = (0..m).map(|j| feats.mean_feature(j, &means[r], &vars[r])).collect();
                (row, feats.second_moment(&means[r], &vars[r]))
            })
            .collect();
        let mut psi1 = DMatrix::zeros(k, m);
        let mut psi2 = DMatrix::zeros(m, m);
        let mut psi2_rows = Vec::with_capacity(k);
        for (r, (row, second)) in per_state.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                psi1[(r, j)] = v;
            }
            psi2 += &second;
            psi2_rows.push(second);
        }
        Ok(Self { psi1, psi2, psi2_rows })
    }

    /// `psi1_k`, the k-th row of `Psi1`.
    pub fn psi1_row(&self, k: usize) -> DVector<f64> {
        self.psi1.row(k).transpose()
    }
}

fn prepare(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
) -> Result<PreparedFeatures> {
    if inputs.dim() != hyper.input_dim() {
        return Err(shape(format!(
            "inputs have dimension {}, layer expects {}",
            inputs.dim(),
            hyper.input_dim()
        )));
    }
    PreparedFeatures::new(spectral, hyper)
}

pub fn psi1(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
) -> Result<DMatrix<f64>> {
    let feats = prepare(inputs, spectral, hyper)?;
    let (means, vars) = inputs.rows();
    Ok(DMatrix::from_fn(inputs.num_states(), hyper.num_features, |r, j| {
        feats.mean_feature(j, &means[r], &vars[r])
    }))
}

pub fn psi2(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
) -> Result<DMatrix<f64>> {
    Ok(PsiStats::compute(inputs, spectral, hyper)?.psi2)
}

/// Cross-state second moment `E[phi(x_k) phi(x_k')^T]` with shared random
/// spectral points and independent inputs.
///
/// Off the diagonal the two features use independent spectral points, so the
/// entry factorizes into `psi1_k[m] psi1_k'[m']`. The diagonal `D` keeps the
/// shared `z_m` and depends on `x_k - x_k'` and `x_k + x_k'`.
pub fn psi_cross_vss(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
    k: usize,
    k_hat: usize,
) -> Result<DMatrix<f64>> {
    let n = inputs.num_states();
    if k >= n || k_hat >= n {
        return Err(domain(format!("state index out of range (K = {n})")));
    }
    if k == k_hat {
        return Err(domain("psi_cross_vss needs distinct states; use the per-state psi2 row"));
    }
    let feats = prepare(inputs, spectral, hyper)?;
    let (means, vars) = inputs.rows();
    let m = hyper.num_features;
    let a: Vec<f64> = (0..m).map(|j| feats.mean_feature(j, &means[k], &vars[k])).collect();
    let b: Vec<f64> = (0..m).map(|j| feats.mean_feature(j, &means[k_hat], &vars[k_hat])).collect();
    let mut out = DMatrix::from_fn(m, m, |r, c| a[r] * b[c]);
    for j in 0..m {
        out[(j, j)] = feats.cross_diagonal(j, &means[k], &vars[k], &means[k_hat], &vars[k_hat]);
    }
    Ok(out)
}

/// Diagonal `D` of [`psi_cross_vss`] only.
pub fn psi_cross_diagonal(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
    k: usize,
    k_hat: usize,
) -> Result<DVector<f64>> {
    let n = inputs.num_states();
    if k >= n || k_hat >= n {
        return Err(domain(format!("state index out of range (K = {n})")));
    }
    let feats = prepare(inputs, spectral, hyper)?;
    let (means, vars) = inputs.rows();
    Ok(DVector::from_fn(hyper.num_features, |j, _| {
        feats.cross_diagonal(j, &means[k], &vars[k], &means[k_hat], &vars[k_hat])
    }))
}

/// Monte Carlo estimate of `Psi1` and `Psi2` with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct PsiEstimate {
    pub num_samples: usize,
    pub psi1: DMatrix<f64>,
    pub psi1_se: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
    pub psi2_se: DMatrix<f64>,
}

impl PsiEstimate {
    pub fn mean_standard_error(&self) -> f64 {
        let n = self.psi1_se.len() + self.psi2_se.len();
        (self.psi1_se.sum() + self.psi2_se.sum()) / n as f64
    }
}

/// Running mean and sum of squared deviations (Welford).
#[derive(Clone)]
struct Running {
    mean: Vec<f64>,
    m2: Vec<f64>,
    count: f64,
}

impl Running {
    fn new(n: usize) -> Self {
        Self { mean: vec![0.0; n], m2: vec![0.0; n], count: 0.0 }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1.0;
        for ((mu, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *mu;
            *mu += delta / self.count;
            *m2 += delta * (v - *mu);
        }
    }

    fn standard_errors(&self) -> Vec<f64> {
        let n = self.count;
        self.m2.iter().map(|m2| (m2.max(0.0) / (n - 1.0) / n).sqrt()).collect()
    }
}

fn sample_features(
    x_mean: &[f64],
    x_sd: &[f64],
    hyper: &SpectralLayerHyper,
    z: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
    x_buf: &mut [f64],
    out: &mut [f64],
) {
    for j in 0..x_buf.len() {
        let e: f64 = StandardNormal.sample(rng);
        x_buf[j] = x_mean[j] + x_sd[j] * e;
    }
    let q = x_buf.len();
    let amp = hyper.amplitude();
    for (m, o) in out.iter_mut().enumerate() {
        let mut arg = hyper.phases[m];
        for j in 0..q {
            let w = z[(m, j)] / hyper.lengthscales[j] + std::f64::consts::TAU * hyper.spectral_mean[j];
            arg += w * (x_buf[j] - hyper.shifts[(m, j)]);
        }
        *o = amp * arg.cos();
    }
}

fn draw_points(mean: &DMatrix<f64>, sd: &DMatrix<f64>, rng: &mut ChaCha8Rng, z: &mut DMatrix<f64>) {
    for (i, zi) in z.iter_mut().enumerate() {
        let e: f64 = StandardNormal.sample(rng);
        *zi = mean[i] + sd[i] * e;
    }
}

/// Sampling oracle for [`psi1`] and [`psi2`]: draws spectral points and all
/// state inputs jointly, `num_samples` times.
pub fn monte_carlo_psi(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
    num_samples: usize,
    seed: u64,
) -> Result<PsiEstimate> {
    prepare(inputs, spectral, hyper)?;
    if num_samples < 1000 {
        return Err(Error::Validation(format!(
            "monte carlo needs at least 1000 samples, got {num_samples}"
        )));
    }
    let k = inputs.num_states();
    let m = hyper.num_features;
    let q = hyper.input_dim();
    let (means, vars) = inputs.rows();
    let sds: Vec<Vec<f64>> = vars.iter().map(|r| r.iter().map(|v| v.sqrt()).collect()).collect();
    let z_sd = spectral.vars.map(|v| v.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut acc1 = Running::new(k * m);
    let mut acc2 = Running::new(m * m);
    let mut z = DMatrix::zeros(m, q);
    let mut x_buf = vec![0.0; q];
    let mut phi = vec![0.0; k * m];
    let mut feat = vec![0.0; m];
    let mut gram = vec![0.0; m * m];
    for _ in 0..num_samples {
        draw_points(&spectral.means, &z_sd, &mut rng, &mut z);
        gram.iter_mut().for_each(|g| *g = 0.0);
        for r in 0..k {
            sample_features(&means[r], &sds[r], hyper, &z, &mut rng, &mut x_buf, &mut feat);
            phi[r * m..(r + 1) * m].copy_from_slice(&feat);
            for a in 0..m {
                for b in 0..m {
                    gram[a * m + b] += feat[a] * feat[b];
                }
            }
        }
        acc1.push(&phi);
        acc2.push(&gram);
    }
    let se1 = acc1.standard_errors();
    let se2 = acc2.standard_errors();
    Ok(PsiEstimate {
        num_samples,
        psi1: DMatrix::from_fn(k, m, |r, c| acc1.mean[r * m + c]),
        psi1_se: DMatrix::from_fn(k, m, |r, c| se1[r * m + c]),
        psi2: DMatrix::from_fn(m, m, |r, c| acc2.mean[r * m + c]),
        psi2_se: DMatrix::from_fn(m, m, |r, c| se2[r * m + c]),
    })
}

/// Sampling oracle for [`psi_cross_vss`]: `(mean, standard error)`.
pub fn monte_carlo_cross(
    inputs: &InputDistribution,
    spectral: &SpectralDistribution,
    hyper: &SpectralLayerHyper,
    k: usize,
    k_hat: usize,
    num_samples: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    prepare(inputs, spectral, hyper)?;
    if num_samples < 1000 {
        return Err(Error::Validation("monte carlo needs at least 1000 samples".into()));
    }
    let m = hyper.num_features;
    let q = hyper.input_dim();
    let (means, vars) = inputs.rows();
    let sd = |r: usize| -> Vec<f64> { vars[r].iter().map(|v| v.sqrt()).collect() };
    let (sd_a, sd_b) = (sd(k), sd(k_hat));
    let z_sd = spectral.vars.map(|v| v.sqrt());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Running::new(m * m);
    let mut z = DMatrix::zeros(m, q);
    let mut x_buf = vec![0.0; q];
    let mut fa = vec![0.0; m];
    let mut fb = vec![0.0; m];
    let mut outer = vec![0.0; m * m];
    for _ in 0..num_samples {
        draw_points(&spectral.means, &z_sd, &mut rng, &mut z);
        sample_features(&means[k], &sd_a, hyper, &z, &mut rng, &mut x_buf, &mut fa);
        sample_features(&means[k_hat], &sd_b, hyper, &z, &mut rng, &mut x_buf, &mut fb);
        for a in 0..m {
            for b in 0..m {
                outer[a * m + b] = fa[a] * fb[b];
            }
        }
        acc.push(&outer);
    }
    let se = acc.standard_errors();
    Ok((
        DMatrix::from_fn(m, m, |r, c| acc.mean[r * m + c]),
        DMatrix::from_fn(m, m, |r, c| se[r * m + c]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::checks::random_psi_instance;
    use crate::linalg::min_eigenvalue;
    use crate::spectral_features::feature_matrix;
    use rand::Rng;
    use std::f64::consts::TAU;

    #[test]
    fn degenerate_limit_matches_features_at_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 4, 5, 2, 1e-12, 1e-12);
        let stats = PsiStats::compute(&inputs, &spectral, &hyper).unwrap();
        let phi = feature_matrix(&inputs.means, &SpectralPoints(spectral.means.clone()), &hyper).unwrap();
        assert!((&stats.psi1 - &phi).abs().max() < 1e-6);
        assert!((&stats.psi2 - phi.transpose() * &phi).abs().max() < 1e-6);
    }

    #[test]
    fn bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 5, 6, 3, 0.8, 0.8);
            let stats = PsiStats::compute(&inputs, &spectral, &hyper).unwrap();
            let amp = hyper.amplitude();
            assert!(stats.psi1.iter().all(|v| v.abs() <= amp + 1e-15));
            assert!(stats.psi2.trace() <= 5.0 * 2.0 * hyper.sigma_power.powi(2) + 1e-12);
            let cov = &stats.psi2 - stats.psi1.transpose() * &stats.psi1;
            assert!(min_eigenvalue(&cov) >= -crate::linalg::psd_tolerance(&stats.psi2));
            assert!(min_eigenvalue(&stats.psi2) >= -crate::linalg::psd_tolerance(&stats.psi2));
        }
    }

    #[test]
    fn monotone_damping_in_input_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (inputs, _, hyper) = random_psi_instance(&mut rng, 4, 5, 2, 0.5, 0.0);
        let spectral = SpectralDistribution::fixed(&SpectralPoints(DMatrix::from_fn(5, 2, |_, _| {
            rng.random_range(-1.0..1.0)
        })));
        let base = psi1(&inputs, &spectral, &hyper).unwrap();
        for c in [1.5, 3.0, 10.0] {
            let scaled = InputDistribution::new(inputs.means.clone(), &inputs.vars * c).unwrap();
            let p = psi1(&scaled, &spectral, &hyper).unwrap();
            for (a, b) in p.iter().zip(base.iter()) {
                assert!(a.abs() <= b.abs() + 1e-15);
            }
        }
    }

    #[test]
    fn cross_is_transpose_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 3, 4, 2, 0.4, 0.3);
        let a = psi_cross_vss(&inputs, &spectral, &hyper, 0, 2).unwrap();
        let b = psi_cross_vss(&inputs, &spectral, &hyper, 2, 0).unwrap();
        assert!((&a - b.transpose()).abs().max() < 1e-14);
        assert!(psi_cross_vss(&inputs, &spectral, &hyper, 1, 1).is_err());
        assert!(psi_cross_vss(&inputs, &spectral, &hyper, 1, 3).is_err());
    }

    #[test]
    fn cross_diagonal_reduces_for_identical_states() {
        // Two iid copies x, x' ~ N(mu, d): x - x' ~ N(0, 2d), x + x' ~ N(2 mu, 2d).
        // With Q = 1 and a fixed spectral point the expectation is a pair of
        // damped cosines that can be written down directly.
        let hyper = SpectralLayerHyper {
            num_features: 1,
            sigma_power: 1.3,
            lengthscales: DVector::from_element(1, 0.8),
            spectral_mean: DVector::from_element(1, 0.05),
            shifts: DMatrix::from_element(1, 1, 0.2),
            phases: DVector::from_element(1, 1.1),
            sigma_noise: 0.1,
        };
        let (mu, d) = (0.4, 0.3);
        let inputs = InputDistribution::new(
            DMatrix::from_element(2, 1, mu),
            DMatrix::from_element(2, 1, d),
        )
        .unwrap();
        let z = 0.9;
        let spectral = SpectralDistribution::fixed(&SpectralPoints(DMatrix::from_element(1, 1, z)));
        let dmat = psi_cross_vss(&inputs, &spectral, &hyper, 0, 1).unwrap();
        let w = z / 0.8 + TAU * 0.05;
        let amp2 = 2.0 * 1.3f64.powi(2);
        let diff = (-0.5 * w * w * 2.0 * d).exp();
        let sum = (-0.5 * w * w * 2.0 * d).exp() * (w * (2.0 * mu - 0.4) + 2.2).cos();
        let expected = 0.5 * amp2 * (diff + sum);
        assert!((dmat[(0, 0)] - expected).abs() < 1e-8);
    }

    #[test]
    fn monte_carlo_is_deterministic_and_exact_without_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 2, 3, 2, 0.5, 0.5);
        let a = monte_carlo_psi(&inputs, &spectral, &hyper, 2000, 17).unwrap();
        let b = monte_carlo_psi(&inputs, &spectral, &hyper, 2000, 17).unwrap();
        let c = monte_carlo_psi(&inputs, &spectral, &hyper, 2000, 18).unwrap();
        assert_eq!(a.psi1.as_slice(), b.psi1.as_slice());
        assert_eq!(a.psi2.as_slice(), b.psi2.as_slice());
        assert_ne!(a.psi1.as_slice(), c.psi1.as_slice());

        let det_inputs = InputDistribution::deterministic(inputs.means.clone());
        let points = SpectralPoints(spectral.means.clone());
        let det_spec = SpectralDistribution::fixed(&points);
        let est = monte_carlo_psi(&det_inputs, &det_spec, &hyper, 1000, 3).unwrap();
        let phi = feature_matrix(&det_inputs.means, &points, &hyper).unwrap();
        assert_eq!(est.psi1.as_slice(), phi.as_slice());
        assert!(est.psi1_se.iter().all(|&s| s == 0.0));
        assert!(est.psi2_se.iter().all(|&s| s == 0.0));
        assert!(monte_carlo_psi(&det_inputs, &det_spec, &hyper, 999, 3).is_err());
    }

    #[test]
    fn standard_error_scales_with_sample_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 3, 4, 2, 0.5, 0.5);
        let a = monte_carlo_psi(&inputs, &spectral, &hyper, 20_000, 1).unwrap();
        let b = monte_carlo_psi(&inputs, &spectral, &hyper, 40_000, 2).unwrap();
        let ratio = b.mean_standard_error() / a.mean_standard_error();
        let target = 1.0 / 2f64.sqrt();
        assert!((ratio / target - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn analytic_matches_monte_carlo_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (inputs, spectral, hyper) = random_psi_instance(&mut rng, 3, 4, 2, 0.6, 0.6);
        let stats = PsiStats::compute(&inputs, &spectral, &hyper).unwrap();
        let est = monte_carlo_psi(&inputs, &spectral, &hyper, 200_000, 9).unwrap();
        for (i, (a, b)) in stats.psi1.iter().zip(est.psi1.iter()).enumerate() {
            assert!((a - b).abs() <= 4.0 * est.psi1_se[i] + 1e-12, "psi1 entry {i}");
        }
        for (i, (a, b)) in stats.psi2.iter().zip(est.psi2.iter()).enumerate() {
            assert!((a - b).abs() <= 4.0 * est.psi2_se[i] + 1e-12, "psi2 entry {i}");
        }
    }
}

//! Bound inputs derived from a trained model.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::capital_l::{BoundInputs, LayerBoundInputs};
use crate::error::{domain, Result};
use crate::linalg::{symmetrize, PsdSpectrum};
use crate::psi_statistics::{PreparedFeatures, PsiStats};
use crate::revarb_model::{kl_q_p, layer_psi_stats, DeepModel, Mode};

/// Variance and covariance inputs of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerVarCov {
    /// Noise-free `Var[f_k]` per state.
    pub feature_vars: DVector<f64>,
    /// `Var[h_k] = Var[f_k] + sigma^2` per state.
    pub state_vars: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Predictive means `psi1_k m`.
    pub predicted: DVector<f64>,
}

impl LayerVarCov {
    pub fn sum_var(&self) -> f64 {
        self.state_vars.sum()
    }
}

fn feature_vars(psi: &PsiStats, m: &DVector<f64>, s: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        psi.psi2_rows.len(),
        psi.psi2_rows.iter().enumerate().map(|(k, p2)| {
            let mu = psi.psi1.row(k).transpose().dot(m);
            ((p2 * m).dot(m) - mu * mu + (p2 * s).trace()).max(0.0)
        }),
    )
}

/// Per-layer `Var[h]` and `Cov[h]`.
///
/// SS: `Cov = Psi1 s Psi1^T`. VSS: off-diagonal entries come from the
/// shared-spectral-point second moment and the diagonal is `Var[f_k]`; the
/// result is projected onto the PSD cone.
pub fn variance_cov_inputs(model: &DeepModel) -> Result<Vec<LayerVarCov>> {
    let mut out = Vec::with_capacity(model.layers.len());
    for (l, layer) in model.layers.iter().enumerate() {
        let psi = layer_psi_stats(model, l)?;
        let m = &layer.params.weight_mean;
        let s = &layer.params.weight_cov;
        let fvars = feature_vars(&psi, m, s);
        let sigma2 = layer.hyper.sigma_noise.powi(2);
        let cov = match model.mode {
            Mode::Ss => {
                let mut c = &psi.psi1 * s * psi.psi1.transpose();
                symmetrize(&mut c);
                c
            }
            Mode::Vss => vss_cov(model, l, &psi, &fvars)?,
        };
        out.push(LayerVarCov {
            state_vars: fvars.map(|v| v + sigma2),
            feature_vars: fvars,
            cov,
            predicted: &psi.psi1 * m,
        });
    }
    Ok(out)
}

fn vss_cov(model: &DeepModel, l: usize, psi: &PsiStats, fvars: &DVector<f64>) -> Result<DMatrix<f64>> {
    let layer = &model.layers[l];
    let inputs = model.build_inputs(l)?;
    let feats = PreparedFeatures::new(&layer.spectral_distribution(model.mode), &layer.hyper)?;
    let (means, vars) = inputs.rows();
    let k = model.num_states;
    let m = &layer.params.weight_mean;
    let s = &layer.params.weight_cov;
    let second: DVector<f64> = DVector::from_fn(m.len(), |j, _| m[j] * m[j] + s[(j, j)]);
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|a| {
            let pa = psi.psi1.row(a);
            ((a + 1)..k)
                .map(|b| {
                    let pb = psi.psi1.row(b);
                    let mut v = (pa * s * pb.transpose())[(0, 0)];
                    for j in 0..m.len() {
                        let d = feats.cross_diagonal(j, &means[a], &vars[a], &means[b], &vars[b]);
                        v += (d - pa[j] * pb[j]) * second[j];
                    }
                    v
                })
                .collect()
        })
        .collect();
    let mut cov = DMatrix::from_diagonal(fvars);
    for (a, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let b = a + 1 + off;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    project_psd(&cov)
}

/// Nearest PSD matrix in Frobenius norm (negative eigenvalues clamped).
fn project_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    PsdSpectrum::new(&out)?;
    Ok(out)
}

/// `max_k |h_{k+1} - h_k|` of a predicted sequence.
pub fn lipschitz_estimate(predicted: &DVector<f64>) -> Result<f64> {
    if predicted.len() < 2 {
        return Err(domain("lipschitz estimate needs at least two states"));
    }
    Ok(predicted
        .as_slice()
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max))
}

/// `L_Ora = sum_l 1^T (lambda*_l + Var[f_l]) / (2 sigma_l^2)` with
/// `lambda*` the latent variances of hidden layers and zero for the output.
pub fn oracle_residual(model: &DeepModel, varcov: &[LayerVarCov]) -> f64 {
    model
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let latent = model.latents.get(l).map_or(0.0, |lat| lat.vars.sum());
            (latent + varcov[l].feature_vars.sum()) / (2.0 * layer.hyper.sigma_noise.powi(2))
        })
        .sum()
}

/// Everything the bound evaluators need, taken from a trained model.
#[derive(Debug, Clone)]
pub struct ModelBoundInputs {
    pub inputs: BoundInputs,
    pub varcov: Vec<LayerVarCov>,
    pub oracle_residual: f64,
}

/// Builds [`BoundInputs`] with `S_l` from consecutive predicted differences,
/// `delta_l` the layer input dimension (unless overridden) and the big
/// Lipschitz constant the product of the `S_l`.
pub fn bound_inputs_from_model(model: &DeepModel, tau: f64, deltas: Option<&[f64]>) -> Result<ModelBoundInputs> {
    let varcov = variance_cov_inputs(model)?;
    let mut layers = Vec::with_capacity(varcov.len());
    for (l, vc) in varcov.iter().enumerate() {
        let delta = match deltas {
            Some(d) => *d.get(l).ok_or_else(|| domain("one delta per layer is required"))?,
            None => model.input_dim(l) as f64,
        };
        layers.push(LayerBoundInputs {
            state_vars: vc.state_vars.clone(),
            cov: vc.cov.clone(),
            sigma_noise: model.layers[l].hyper.sigma_noise,
            lipschitz: lipschitz_estimate(&vc.predicted)?,
            delta,
        });
    }
    let inputs = BoundInputs {
        big_lipschitz: layers.iter().map(|l| l.lipschitz).product(),
        layers,
        kl: kl_q_p(model)?,
        tau,
        input_dim: model.input_dim(0),
    };
    inputs.validate()?;
    Ok(ModelBoundInputs { oracle_residual: oracle_residual(model, &varcov), inputs, varcov })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lipschitz_examples() {
        assert_eq!(lipschitz_estimate(&DVector::from_element(4, 2.5)).unwrap(), 0.0);
        assert_eq!(lipschitz_estimate(&DVector::from_vec(vec![0.0, 1.0, 3.0])).unwrap(), 2.0);
        assert!(lipschitz_estimate(&DVector::from_element(1, 0.0)).is_err());
    }
}

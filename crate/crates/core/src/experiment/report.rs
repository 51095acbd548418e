//! Side-by-side table of every bound variant at selected sample sizes.

use std::fmt::Write;

use serde::Serialize;

use super::run::empirical_side;
use crate::error::{Error, Result};
use crate::pac_bounds::{
    bound_inputs_from_model, covering_extension, gap_bound, theorem2_bound, theorem3_gap_bound,
    theorem5_oracle_bound, two_sided, union_lower_bound, BoundInputs, CapitalL, CoveringParams, ModelBoundInputs,
};
use crate::revarb_model::DeepModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: u64,
    /// Empirical form with `lambda = N` on `N` quasi-real samples.
    pub empirical: f64,
    /// Gap with `lambda = sqrt N`.
    pub gap: f64,
    /// Gap plus the oracle residual.
    pub oracle: f64,
    /// Gap at confidence `tau / 2`.
    pub two_sided_gap: f64,
    /// Covering extension with `epsilon' = 1/N`, `tau' = tau` and
    /// `lambda = sqrt N`; `None` when it is undefined for this model.
    pub covering: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub rows: Vec<ReportRow>,
    pub bound_inputs: ModelBoundInputs,
    /// Probability that the gap and covering bounds hold simultaneously.
    pub joint_confidence: f64,
}

fn with_tau(inputs: &BoundInputs, tau: f64) -> BoundInputs {
    BoundInputs { tau, ..inputs.clone() }
}

pub fn bound_report(model: &DeepModel, tau: f64, ns: &[u64], seed: u64) -> Result<BoundReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::Validation("sample sizes must be positive and strictly increasing".into()));
    }
    let bi = bound_inputs_from_model(model, tau, None)?;
    let inputs = &bi.inputs;
    let eval = CapitalL::new(inputs)?;
    let empirical = empirical_side(model, ns, seed)?;
    let rows = ns
        .iter()
        .zip(&empirical.l_rev)
        .map(|(&n, &l_rev)| {
            let nf = n as f64;
            let covering = covering_extension(
                &eval,
                inputs,
                &CoveringParams {
                    epsilon_prime: 1.0 / nf,
                    big_lipschitz: inputs.big_lipschitz,
                    q: inputs.input_dim,
                    tau_prime: tau,
                    lambda: nf.sqrt(),
                    n: nf,
                    state: None,
                },
            )
            .ok()
            .map(|c| c.value);
            Ok(ReportRow {
                n,
                empirical: theorem2_bound(&eval, inputs, l_rev, nf)?.value,
                gap: theorem3_gap_bound(&eval, inputs, nf)?.value,
                oracle: theorem5_oracle_bound(&eval, inputs, bi.oracle_residual, nf)?.value,
                two_sided_gap: two_sided(|t| Ok(gap_bound(&eval, &with_tau(inputs, t), nf.sqrt(), nf)?.value), tau)?,
                covering,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport { rows, joint_confidence: union_lower_bound(&[1.0 - tau, 1.0 - tau]), bound_inputs: bi })
}

pub fn render_report(report: &BoundReport) -> String {
    let bi = &report.bound_inputs;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "KL = {:.4}, L_Ora = {:.4}, tau = {}, S = {:?}",
        bi.inputs.kl,
        bi.oracle_residual,
        bi.inputs.tau,
        bi.inputs.layers.iter().map(|l| l.lipschitz).collect::<Vec<_>>()
    );
    let _ = writeln!(
        out,
        "{:>10} {:>14} {:>14} {:>14} {:>14} {:>14}",
        "N", "empirical", "gap", "oracle", "gap(2-sided)", "covering"
    );
    for r in &report.rows {
        let cov = r.covering.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{:>10} {:>14.6} {:>14.6} {:>14.6} {:>14.6} {:>14}",
            r.n, r.empirical, r.gap, r.oracle, r.two_sided_gap, cov
        );
    }
    let _ = writeln!(out, "gap and covering hold jointly with probability >= {:.3}", report.joint_confidence);
    out
}

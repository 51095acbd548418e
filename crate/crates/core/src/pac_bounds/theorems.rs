use serde::{Deserialize, Serialize};

use super::capital_l::{BoundInputs, CapitalL, LTerms};
use crate::error::{domain, Error, Result};

/// A bound value with its complexity rows, each already divided by the
/// bound's normalizer (`lambda`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub kl: f64,
}

fn scaled(terms: LTerms, by: f64) -> (f64, f64, f64) {
    (terms.variance / by, terms.log_det / by, terms.lipschitz / by)
}

fn check_n(n: f64) -> Result<()> {
    if n >= 1.0 && n.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("N must be at least 1, got {n}")))
    }
}

/// Empirical bound with `lambda = N`: `L(N)/N - L_REV/N + log(1/tau)/N`.
pub fn theorem2_bound(eval: &CapitalL, inputs: &BoundInputs, l_rev: f64, n: f64) -> Result<BoundValue> {
    check_n(n)?;
    let (t1, t2, t3) = scaled(eval.terms(n, n), n);
    Ok(BoundValue {
        value: t1 + t2 + t3 - l_rev / n + (1.0 / inputs.tau).ln() / n,
        term1: t1,
        term2: t2,
        term3: t3,
        kl: inputs.kl,
    })
}

/// Gap bound at temperature `lambda`: `(KL + log(1/tau) + L(lambda)) / lambda`.
pub fn gap_bound(eval: &CapitalL, inputs: &BoundInputs, lambda: f64, n: f64) -> Result<BoundValue> {
    check_n(n)?;
    if !(lambda > 0.0) {
        return Err(domain("lambda must be positive"));
    }
    let (t1, t2, t3) = scaled(eval.terms(lambda, n), lambda);
    Ok(BoundValue {
        value: (inputs.kl + (1.0 / inputs.tau).ln()) / lambda + t1 + t2 + t3,
        term1: t1,
        term2: t2,
        term3: t3,
        kl: inputs.kl,
    })
}

/// Consistency form: the gap bound with `lambda = sqrt(N)`.
pub fn theorem3_gap_bound(eval: &CapitalL, inputs: &BoundInputs, n: f64) -> Result<BoundValue> {
    gap_bound(eval, inputs, n.sqrt(), n)
}

/// Oracle form: `L_Ora + (KL + log(1/tau) + L(sqrt N)) / sqrt N`.
pub fn theorem5_oracle_bound(eval: &CapitalL, inputs: &BoundInputs, oracle_residual: f64, n: f64) -> Result<BoundValue> {
    let mut b = theorem3_gap_bound(eval, inputs, n)?;
    b.value += oracle_residual;
    Ok(b)
}

/// Covering-number bound `(epsilon' / L)^-Q` on the number of balls.
pub fn covering_count(epsilon_prime: f64, big_lipschitz: f64, q: usize) -> Result<f64> {
    if !(epsilon_prime > 0.0 && epsilon_prime <= 1.0) || !(big_lipschitz > 0.0) {
        return Err(domain("need 0 < epsilon' <= 1 and L > 0"));
    }
    Ok((epsilon_prime / big_lipschitz).powi(-(q as i32)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoveringParams {
    pub epsilon_prime: f64,
    pub big_lipschitz: f64,
    pub q: usize,
    pub tau_prime: f64,
    pub lambda: f64,
    pub n: f64,
    /// State used for `L_k`; `None` picks the state with the largest bound.
    pub state: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringBound {
    pub value: f64,
    pub covering_term: f64,
    pub log_ratio: f64,
    pub state: usize,
}

/// Covering-number extension
///
/// ```text
/// R = [KL + Q log(L / eps') + log(1/tau') + log(L(lambda'/K) / L_k(lambda')) + L(lambda)] / lambda
/// ```
///
/// with `lambda' = K lambda`.
pub fn covering_extension(eval: &CapitalL, inputs: &BoundInputs, p: &CoveringParams) -> Result<CoveringBound> {
    check_n(p.n)?;
    if !(p.epsilon_prime > 0.0 && p.epsilon_prime <= 1.0) {
        return Err(domain(format!("epsilon' must lie in (0, 1], got {}", p.epsilon_prime)));
    }
    if !(p.big_lipschitz > 0.0) {
        return Err(domain(format!("big Lipschitz constant must be positive, got {}", p.big_lipschitz)));
    }
    if !(p.tau_prime > 0.0 && p.tau_prime <= 1.0) {
        return Err(Error::Validation(format!("tau' must lie in (0, 1], got {}", p.tau_prime)));
    }
    if !(p.lambda > 0.0) {
        return Err(domain("lambda must be positive"));
    }
    let k = eval.num_states();
    let lambda_prime = p.lambda * k as f64;
    let state = match p.state {
        Some(s) if s < k => s,
        Some(s) => return Err(domain(format!("state {s} out of range (K = {k})"))),
        None => {
            let values: Vec<f64> = (0..k).map(|s| eval.state_value(s, lambda_prime, p.n)).collect();
            if let Some(s) = values.iter().position(|v| !(*v > 0.0)) {
                return Err(domain(format!("log ratio undefined: L_{s}(lambda') = {}", values[s])));
            }
            (0..k).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("K >= 1")
        }
    };
    let numerator = eval.value(lambda_prime / k as f64, p.n);
    let denominator = eval.state_value(state, lambda_prime, p.n);
    if !(numerator > 0.0) || !(denominator > 0.0) {
        return Err(domain(format!(
            "log ratio undefined: L(lambda'/K) = {numerator}, L_{state}(lambda') = {denominator}"
        )));
    }
    let log_ratio = (numerator / denominator).ln();
    let covering_term = p.q as f64 * (p.big_lipschitz / p.epsilon_prime).ln();
    let value = (inputs.kl + covering_term + (1.0 / p.tau_prime).ln() + log_ratio + eval.value(p.lambda, p.n)) / p.lambda;
    Ok(CoveringBound { value, covering_term, log_ratio, state })
}

/// Two-sided version of a one-sided bound: evaluate it at confidence
/// `tau / 2`.
pub fn two_sided<F>(one_sided: F, tau: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Validation(format!("tau must lie in (0, 1], got {tau}")));
    }
    one_sided(tau / 2.0)
}

/// Lower bound `sum_i P(zeta_i) - (n - 1)` on the probability that all
/// events hold.
pub fn union_lower_bound(probabilities: &[f64]) -> f64 {
    probabilities.iter().sum::<f64>() - (probabilities.len() as f64 - 1.0)
}

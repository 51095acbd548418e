use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::capital_l::{BoundInputs, CapitalL};
use super::theorems::{gap_bound, theorem2_bound, BoundValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaRule {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "sqrtN")]
    SqrtN,
}

impl LambdaRule {
    pub fn lambda(self, n: f64) -> f64 {
        match self {
            LambdaRule::N => n,
            LambdaRule::SqrtN => n.sqrt(),
        }
    }
}

impl fmt::Display for LambdaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LambdaRule::N => "N",
            LambdaRule::SqrtN => "sqrtN",
        })
    }
}

impl FromStr for LambdaRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" | "n" => Ok(LambdaRule::N),
            "sqrtN" | "sqrtn" | "sqrt" => Ok(LambdaRule::SqrtN),
            other => Err(Error::Validation(format!("unknown lambda rule `{other}` (expected N or sqrtN)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// Empirical bound with `lambda = N`, needs `L_REV` on the first `N` samples.
    Empirical,
    /// Generalization gap `(KL + log(1/tau) + L(lambda)) / lambda`.
    Gap,
    /// Gap plus the oracle residual.
    Oracle,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundKind::Empirical => "empirical",
            BoundKind::Gap => "gap",
            BoundKind::Oracle => "oracle",
        })
    }
}

impl FromStr for BoundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" | "theorem2" => Ok(BoundKind::Empirical),
            "gap" | "theorem3" => Ok(BoundKind::Gap),
            "oracle" | "theorem5" => Ok(BoundKind::Oracle),
            other => Err(Error::Validation(format!("unknown bound `{other}` (expected empirical, gap or oracle)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u64,
    pub bound: BoundValue,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub lambda_rule: LambdaRule,
    pub tau: f64,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

/// `count` log-spaced integers from 1 to `n_max`, deduplicated.
pub fn log_grid(n_max: u64, count: usize) -> Result<Vec<u64>> {
    if n_max == 0 || count == 0 {
        return Err(Error::Validation("grid needs N_max >= 1 and at least one point".into()));
    }
    if count == 1 {
        return Ok(vec![n_max]);
    }
    let top = (n_max as f64).ln();
    let mut grid: Vec<u64> = (0..count)
        .map(|i| (top * i as f64 / (count - 1) as f64).exp().round() as u64)
        .map(|n| n.clamp(1, n_max))
        .collect();
    grid.dedup();
    Ok(grid)
}

/// Extra per-N data some bound kinds need.
pub enum CurveSide<'a> {
    None,
    /// `L_REV` evaluated on the first `N` samples, one entry per grid point.
    VariationalBound(&'a [f64]),
    /// Constant oracle residual.
    Oracle(f64),
}

/// Evaluate a bound over the grid in parallel.
pub fn evaluate_curve(
    inputs: &BoundInputs,
    kind: BoundKind,
    lambda_rule: LambdaRule,
    grid: &[u64],
    side: CurveSide<'_>,
    seed: u64,
) -> Result<BoundCurve> {
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("grid must be strictly increasing".into()));
    }
    let eval = CapitalL::new(inputs)?;
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let start = Instant::now();
            let nf = n as f64;
            let bound = match (kind, &side) {
                (BoundKind::Empirical, CurveSide::VariationalBound(l_rev)) => {
                    theorem2_bound(&eval, inputs, l_rev[i], nf)?
                }
                (BoundKind::Empirical, _) => {
                    return Err(Error::Validation("empirical bound needs L_REV per grid point".into()))
                }
                (BoundKind::Gap, _) => gap_bound(&eval, inputs, lambda_rule.lambda(nf), nf)?,
                (BoundKind::Oracle, CurveSide::Oracle(r)) => {
                    let mut b = gap_bound(&eval, inputs, lambda_rule.lambda(nf), nf)?;
                    b.value += r;
                    b
                }
                (BoundKind::Oracle, _) => return Err(Error::Validation("oracle bound needs the oracle residual".into())),
            };
            if !bound.value.is_finite() {
                return Err(Error::NonFinite {
                    iteration: n as usize,
                    detail: format!(
                        "bound at N = {n} is {} (terms {}, {}, {}; KL {})",
                        bound.value, bound.term1, bound.term2, bound.term3, bound.kl
                    ),
                });
            }
            Ok(CurvePoint { n, bound, wall_ms: start.elapsed().as_secs_f64() * 1e3 })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundCurve { kind, lambda_rule, tau: inputs.tau, seed, points })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

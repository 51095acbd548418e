//! Explicit PAC-Bayesian bounds for deep recurrent GPs.

mod capital_l;
mod curve;
mod mgf;
mod model_inputs;
mod theorems;

pub use capital_l::{capital_L, BoundInputs, CapitalL, LTerms, LayerBoundInputs};
pub use curve::{evaluate_curve, log_grid, log_log_slope, BoundCurve, BoundKind, CurvePoint, CurveSide, LambdaRule};
pub use mgf::{monte_carlo_mgf, qfg_mgf, QuadraticForm};
pub use model_inputs::{
    bound_inputs_from_model, lipschitz_estimate, oracle_residual, variance_cov_inputs, LayerVarCov, ModelBoundInputs,
};
pub use theorems::{
    covering_count, covering_extension, gap_bound, theorem2_bound, theorem3_gap_bound, theorem5_oracle_bound,
    two_sided, union_lower_bound, BoundValue, CoveringBound, CoveringParams,
};

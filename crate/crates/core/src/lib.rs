//! Deep recurrent sparse-spectrum Gaussian processes with explicit
//! PAC-Bayesian generalization bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod linalg;
pub mod pac_bounds;
pub mod psi_statistics;
pub mod revarb_model;
pub mod spectral_features;
pub(crate) mod trig_expectation;

pub use error::{Error, Result};

//! Problem data: coefficients, grids, the weight rho = exp(-Phi), density
//! fields and the weighted norms everything else is measured in.
//!
//! The continuous problem lives on R^d; numerically everything is truncated
//! to the box [-R, R]^d with R chosen so the weight at the walls is
//! negligible (default: rho(wall)/rho(center) <= 1e-8). Cells are uniform and
//! cell-centered; all fields are per-cell values of the relative density
//! u = v / rho.

mod coefficients;
mod field;
mod grid;
mod hypotheses;
mod norms;
mod potential;
mod weight;

pub use coefficients::{Coefficients, Mobility, Nonlinearity, VectorField};
pub use field::DensityField;
pub use grid::Grid;
pub use hypotheses::{analytic_drift_bound, check_hypotheses, HypothesisCheck, HypothesisReport};
pub use norms::{inner_l2_rho, norm_l1_rho, norm_linf, normalize_probability, rho_mass};
pub use potential::Potential;
pub use weight::Weight;

use crate::error::Result;
use crate::Real;

/// Complete specification of a Cauchy problem: coefficients, domain
/// truncation and the hypothesis flags that the validation layer audits.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub dim: usize,
    /// Half-width R of the truncated box [-R, R]^d.
    pub radius: Real,
    pub potential: Potential,
    pub coefficients: Coefficients,
    /// Claim that beta has a bounded derivative (checked by sampling; only
    /// recorded, nothing branches on it numerically).
    pub beta_lipschitz: bool,
    /// Half-width of the r-interval on which scalar-coefficient hypotheses
    /// are sampled. Should cover the range of densities the run will see.
    pub sample_span: Real,
}

impl ProblemSpec {
    pub fn new(dim: usize, radius: Real, potential: Potential, coefficients: Coefficients) -> Self {
        let beta_lipschitz = coefficients.beta.derivative_is_bounded();
        Self {
            dim,
            radius,
            potential,
            coefficients,
            beta_lipschitz,
            sample_span: 8.0,
        }
    }

    /// Run all sampled hypothesis checks; error on the first violation.
    pub fn validate(&self) -> Result<HypothesisReport> {
        check_hypotheses(self)
    }
}

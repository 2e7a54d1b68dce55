//! Weighted norms and the probability normalization.
//!
//! The natural space for the flow is L1(rho dx): the resolvent contracts in
//! it and the weighted mass integral u rho dx is conserved. All reductions
//! use compensated summation so results are independent of iteration order
//! well below the acceptance tolerances.

use crate::error::{Error, Result};
use crate::numeric::comp_sum;
use crate::Real;

use super::{DensityField, Grid, Weight};

fn check(field: &DensityField, grid: &Grid) -> Result<()> {
    if field.matches(grid) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: format!("field on a {}^{} grid", grid.n(), grid.dim()),
            got: format!("field of {} values", field.len()),
        })
    }
}

/// |u|_{1,rho} = sum |u_i| rho_i dx^d.
pub fn norm_l1_rho(u: &DensityField, grid: &Grid, weight: &Weight) -> Result<Real> {
    check(u, grid)?;
    Ok(comp_sum(
        u.values.iter().zip(&weight.cell).map(|(u, r)| u.abs() * r),
    ) * grid.cell_volume())
}

/// Unweighted sup norm max |u_i|.
pub fn norm_linf(u: &DensityField) -> Real {
    u.values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// <u, v>_rho = sum u_i v_i rho_i dx^d.
pub fn inner_l2_rho(u: &DensityField, v: &DensityField, grid: &Grid, weight: &Weight) -> Result<Real> {
    check(u, grid)?;
    check(v, grid)?;
    Ok(comp_sum(
        u.values
            .iter()
            .zip(&v.values)
            .zip(&weight.cell)
            .map(|((u, v), r)| u * v * r),
    ) * grid.cell_volume())
}

/// Signed weighted mass sum u_i rho_i dx^d (the conserved quantity).
pub fn rho_mass(u: &DensityField, grid: &Grid, weight: &Weight) -> Result<Real> {
    check(u, grid)?;
    Ok(comp_sum(
        u.values.iter().zip(&weight.cell).map(|(u, r)| u * r),
    ) * grid.cell_volume())
}

/// Scale a nonnegative field to unit weighted mass, making v = u rho a
/// probability density on the box.
pub fn normalize_probability(u: &DensityField, grid: &Grid, weight: &Weight) -> Result<DensityField> {
    check(u, grid)?;
    let min = u.min();
    if min < -1e-12 * norm_linf(u).max(1.0) {
        return Err(Error::Hypothesis {
            hypothesis: "nonnegativity",
            detail: format!("cannot normalize a signed field (min entry {min:e})"),
        });
    }
    let mass = rho_mass(u, grid, weight)?;
    if !(mass > 0.0) {
        return Err(Error::ZeroMass { mass });
    }
    Ok(u.scale(1.0 / mass))
}

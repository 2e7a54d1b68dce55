//! The weight rho = exp(-Phi) sampled on cells and faces.
//!
//! Face values on interior faces are the geometric mean of the adjacent cell
//! values, exp(-(Phi_i + Phi_j)/2). This choice makes the discrete product
//! rule between the weighted divergence and the gradient exact (see
//! [`crate::operators`]) while remaining second-order accurate; wall faces
//! take the pointwise value (they only enter diagnostics, never fluxes).

use crate::error::{Error, Result};
use crate::numeric::comp_sum;
use crate::Real;

use super::{Grid, Potential};

#[derive(Clone)]
pub struct Weight {
    /// rho at cell centers.
    pub cell: Vec<Real>,
    /// rho at faces, per axis, in the grid's face layout (boundary included).
    pub face: Vec<Vec<Real>>,
    /// Total weighted volume Z = sum_i rho_i dx^d of the truncated box.
    pub z: Real,
}

impl Weight {
    pub fn new(grid: &Grid, potential: &Potential) -> Result<Self> {
        let mut cell = Vec::with_capacity(grid.cell_count());
        for k in 0..grid.cell_count() {
            let rho = (-potential.eval(&grid.coords(k))).exp();
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::Hypothesis {
                    hypothesis: "weight positivity",
                    detail: format!("rho = {rho:e} at cell {k}; potential overflow or NaN"),
                });
            }
            cell.push(rho);
        }

        let mut face = Vec::with_capacity(grid.dim());
        for axis in 0..grid.dim() {
            let mut vals = vec![0.0; grid.face_count()];
            for line in 0..grid.line_count() {
                for f in 0..grid.faces_per_line() {
                    let idx = grid.face_flat(f, line);
                    vals[idx] = if f == 0 || f == grid.n() {
                        (-potential.eval(&grid.face_coords(axis, f, line))).exp()
                    } else {
                        let (lo, hi) = grid.face_neighbors(axis, f, line);
                        (cell[lo] * cell[hi]).sqrt()
                    };
                }
            }
            face.push(vals);
        }

        let z = comp_sum(cell.iter().copied()) * grid.cell_volume();
        Ok(Self { cell, face, z })
    }
}

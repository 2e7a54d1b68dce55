//! Per-cell values of the relative density u = v / rho.

use crate::error::Result;
use crate::Real;

use super::Grid;

/// A scalar field sampled at cell centers. Carries its grid shape so that
/// mixed-shape arithmetic is caught rather than silently misindexed.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub values: Vec<Real>,
    dim: usize,
    n: usize,
}

impl DensityField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: Real) -> Self {
        Self {
            values: vec![c; grid.cell_count()],
            dim: grid.dim(),
            n: grid.n(),
        }
    }

    /// Sample a function of the cell-center coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[Real; 2]) -> Real) -> Self {
        let values = (0..grid.cell_count()).map(|k| f(&grid.coords(k))).collect();
        Self {
            values,
            dim: grid.dim(),
            n: grid.n(),
        }
    }

    /// Wrap raw per-cell values; the length must match the grid.
    pub fn from_values(grid: &Grid, values: Vec<Real>) -> Result<Self> {
        grid.check_cells(values.len())?;
        Ok(Self {
            values,
            dim: grid.dim(),
            n: grid.n(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Does this field have the shape of `grid`?
    pub fn matches(&self, grid: &Grid) -> bool {
        self.dim == grid.dim() && self.n == grid.n()
    }

    /// a*x + y elementwise into a fresh field (shapes must agree).
    pub fn axpy(&self, a: Real, y: &DensityField) -> DensityField {
        debug_assert_eq!(self.values.len(), y.values.len());
        DensityField {
            values: self
                .values
                .iter()
                .zip(&y.values)
                .map(|(x, y)| a * x + y)
                .collect(),
            dim: self.dim,
            n: self.n,
        }
    }

    pub fn scale(&self, a: Real) -> DensityField {
        DensityField {
            values: self.values.iter().map(|x| a * x).collect(),
            dim: self.dim,
            n: self.n,
        }
    }

    pub fn sub(&self, other: &DensityField) -> DensityField {
        debug_assert_eq!(self.values.len(), other.values.len());
        DensityField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
            dim: self.dim,
            n: self.n,
        }
    }

    pub fn min(&self) -> Real {
        self.values.iter().copied().fold(Real::INFINITY, Real::min)
    }

    pub fn max(&self) -> Real {
        self.values.iter().copied().fold(Real::NEG_INFINITY, Real::max)
    }
}

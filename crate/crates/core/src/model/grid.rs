//! Uniform cell-centered grid on the box [-R, R]^d, d in {1, 2}.
//!
//! Cells along each axis: x_k = -R + (k + 1/2) dx, k = 0..n, dx = 2R/n.
//! Faces along axis a sit at -R + f dx, f = 0..=n; faces f = 0 and f = n are
//! the no-flux walls. 2D storage is row-major with x fastest:
//! flat = i + n j.

use crate::error::{Error, Result};
use crate::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    radius: Real,
    dx: Real,
}

impl Grid {
    /// A grid with `n` cells per axis. Requires dim in {1, 2}, n >= 4 and a
    /// positive radius; the cells tile [-R, R]^d exactly by construction.
    pub fn new(dim: usize, n: usize, radius: Real) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 {
            return Err(Error::Config(format!("grid needs at least 4 cells per axis, got {n}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!("grid radius must be positive, got {radius}")));
        }
        Ok(Self {
            dim,
            n,
            radius,
            dx: 2.0 * radius / n as Real,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> Real {
        self.radius
    }

    pub fn dx(&self) -> Real {
        self.dx
    }

    /// Cell volume dx^d.
    pub fn cell_volume(&self) -> Real {
        self.dx.powi(self.dim as i32)
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Coordinate of the k-th cell center along one axis.
    pub fn center(&self, k: usize) -> Real {
        -self.radius + (k as Real + 0.5) * self.dx
    }

    /// Coordinate of the f-th face along one axis (f = 0..=n).
    pub fn face_coord(&self, f: usize) -> Real {
        -self.radius + f as Real * self.dx
    }

    /// Flat index of cell (i, j); j ignored in 1D.
    pub fn flat(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && (self.dim == 1 || j < self.n));
        if self.dim == 1 {
            i
        } else {
            i + self.n * j
        }
    }

    /// Cell-center coordinates of a flat index; second entry is 0 in 1D.
    pub fn coords(&self, flat: usize) -> [Real; 2] {
        if self.dim == 1 {
            [self.center(flat), 0.0]
        } else {
            [self.center(flat % self.n), self.center(flat / self.n)]
        }
    }

    /// Number of transverse lines a given axis' faces are organized in
    /// (1 in 1D, n in 2D).
    pub fn line_count(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n
        }
    }

    /// Faces per line along one axis, boundary included.
    pub fn faces_per_line(&self) -> usize {
        self.n + 1
    }

    /// Total face slots along one axis (boundary included).
    pub fn face_count(&self) -> usize {
        self.faces_per_line() * self.line_count()
    }

    /// Flat face index for face position f (0..=n) on transverse line `line`.
    pub fn face_flat(&self, f: usize, line: usize) -> usize {
        debug_assert!(f <= self.n && line < self.line_count());
        f + self.faces_per_line() * line
    }

    /// Coordinates of a face along `axis`: the face plane meets the line of
    /// cell centers at this point. Second entry is 0 in 1D.
    pub fn face_coords(&self, axis: usize, f: usize, line: usize) -> [Real; 2] {
        debug_assert!(axis < self.dim);
        if self.dim == 1 {
            [self.face_coord(f), 0.0]
        } else if axis == 0 {
            [self.face_coord(f), self.center(line)]
        } else {
            [self.center(line), self.face_coord(f)]
        }
    }

    /// Flat indices of the two cells adjacent to an interior face
    /// (f in 1..=n-1): (lower, upper) along the axis.
    pub fn face_neighbors(&self, axis: usize, f: usize, line: usize) -> (usize, usize) {
        debug_assert!(f >= 1 && f < self.faces_per_line() - 1);
        if self.dim == 1 {
            (f - 1, f)
        } else if axis == 0 {
            (self.flat(f - 1, line), self.flat(f, line))
        } else {
            (self.flat(line, f - 1), self.flat(line, f))
        }
    }

    /// Check that a per-cell slice has this grid's shape.
    pub fn check_cells(&self, len: usize) -> Result<()> {
        if len == self.cell_count() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{} cells ({}^{})", self.cell_count(), self.n, self.dim),
                got: format!("{len}"),
            })
        }
    }
}

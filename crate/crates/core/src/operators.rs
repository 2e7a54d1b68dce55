//! Discrete weighted gradient, divergence and generator on the cell grid.
//!
//! With rho_f the geometric-mean face weight, define for a cell field u and
//! a face field F (zero on wall faces):
//!
//! ```text
//!   (grad_h u)_f     = (u_hi - u_lo) / dx                 on interior faces
//!   (div_rho_h F)_i  = sum_axes ( rho_f+ F_f+ - rho_f- F_f- ) / (rho_i dx)
//! ```
//!
//! Two identities hold *exactly* (to rounding), not merely to discretization
//! order, and the whole solver leans on them:
//!
//! * duality: `<div_rho_h F, g>_rho = -<F, grad_h g>_(rho,faces)` — both
//!   sides telescope to the same interior-face sum, walls contribute nothing;
//! * conservation: `sum_i (div_rho_h F)_i rho_i dx^d = 0` — the telescoped
//!   sum of face fluxes cancels.
//!
//! Consequently `L_h = div_rho_h grad_h` is symmetric and negative
//! semidefinite in the weighted inner product and annihilates constants,
//! mirroring the continuous operator L = Lap - grad Phi . grad.
//!
//! The drift term `div_rho(D b(u) u)` is discretized in flux form with
//! donor-cell upwinding by the sign of the face-sampled normal component of
//! D (ties average). [`FaceScheme::Centered`] deliberately disables the
//! upwinding — it exists so tests can demonstrate that the contraction
//! property genuinely depends on it.

use crate::error::{Error, Result};
use crate::model::{analytic_drift_bound, DensityField, Grid, ProblemSpec, Weight};
use crate::numeric::comp_sum;
use crate::regularize::{b_star_eps_with_deriv, eta_eps};
use crate::Real;

/// How the advected quantity b(u)u is sampled on a face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceScheme {
    /// Donor-cell value by the sign of the face drift (the default; makes
    /// the implicit scheme monotone).
    Upwind,
    /// Arithmetic average of the neighbors. Non-monotone; test hook only.
    Centered,
}

/// A field living on cell faces, one slab per axis, wall faces included.
/// Flux-carrying face fields must vanish on the walls.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    pub per_axis: Vec<Vec<Real>>,
    dim: usize,
    n: usize,
}

impl FaceField {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            per_axis: vec![vec![0.0; grid.face_count()]; grid.dim()],
            dim: grid.dim(),
            n: grid.n(),
        }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.dim == grid.dim()
            && self.n == grid.n()
            && self.per_axis.len() == grid.dim()
            && self.per_axis.iter().all(|a| a.len() == grid.face_count())
    }

    /// First wall face carrying a nonzero value, if any: (axis, index, value).
    pub fn boundary_violation(&self, grid: &Grid) -> Option<(usize, usize, Real)> {
        for (axis, vals) in self.per_axis.iter().enumerate() {
            for line in 0..grid.line_count() {
                for f in [0, grid.n()] {
                    let idx = grid.face_flat(f, line);
                    if vals[idx] != 0.0 {
                        return Some((axis, idx, vals[idx]));
                    }
                }
            }
        }
        None
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if !self.matches(grid) {
            return Err(Error::ShapeMismatch {
                expected: format!("face field on a {}^{} grid", grid.n(), grid.dim()),
                got: format!(
                    "{} axes of {:?} faces",
                    self.per_axis.len(),
                    self.per_axis.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        Ok(())
    }
}

/// Forward differences on interior faces; wall faces stay zero.
pub fn grad_h(u: &DensityField, grid: &Grid) -> Result<FaceField> {
    if !u.matches(grid) {
        return Err(Error::ShapeMismatch {
            expected: format!("field on a {}^{} grid", grid.n(), grid.dim()),
            got: format!("{} values", u.len()),
        });
    }
    let mut out = FaceField::zeros(grid);
    let inv_dx = 1.0 / grid.dx();
    for axis in 0..grid.dim() {
        let vals = &mut out.per_axis[axis];
        for line in 0..grid.line_count() {
            for f in 1..grid.n() {
                let (lo, hi) = grid.face_neighbors(axis, f, line);
                vals[grid.face_flat(f, line)] = (u.values[hi] - u.values[lo]) * inv_dx;
            }
        }
    }
    Ok(out)
}

/// Weighted divergence of a flux field. Errors if a wall face carries flux.
pub fn div_rho_h(flux: &FaceField, grid: &Grid, weight: &Weight) -> Result<DensityField> {
    flux.check(grid)?;
    if let Some((axis, face, value)) = flux.boundary_violation(grid) {
        return Err(Error::BoundaryFlux { axis, face, value });
    }
    let mut out = DensityField::zeros(grid);
    let inv_dx = 1.0 / grid.dx();
    for axis in 0..grid.dim() {
        let vals = &flux.per_axis[axis];
        let rho_f = &weight.face[axis];
        for line in 0..grid.line_count() {
            for f in 1..grid.n() {
                // Each interior face feeds its two neighbors with opposite
                // signs; walls never appear, so the total is conservative.
                let idx = grid.face_flat(f, line);
                let (lo, hi) = grid.face_neighbors(axis, f, line);
                let weighted = rho_f[idx] * vals[idx] * inv_dx;
                out.values[lo] += weighted / weight.cell[lo];
                out.values[hi] -= weighted / weight.cell[hi];
            }
        }
    }
    Ok(out)
}

/// Weighted face inner product <F, G>_(rho, faces) (interior faces only;
/// wall values are zero by contract).
pub fn inner_face_rho(f: &FaceField, g: &FaceField, grid: &Grid, weight: &Weight) -> Result<Real> {
    f.check(grid)?;
    g.check(grid)?;
    let mut terms = Vec::with_capacity(grid.dim() * grid.face_count());
    for axis in 0..grid.dim() {
        let rho_f = &weight.face[axis];
        for line in 0..grid.line_count() {
            for face in 1..grid.n() {
                let idx = grid.face_flat(face, line);
                terms.push(rho_f[idx] * f.per_axis[axis][idx] * g.per_axis[axis][idx]);
            }
        }
    }
    Ok(comp_sum(terms) * grid.cell_volume())
}

/// Everything the solvers need about one discretized problem: grid, weight,
/// face-sampled drift, and the cached admissibility constant.
#[derive(Clone)]
pub struct OperatorBundle {
    pub grid: Grid,
    pub weight: Weight,
    pub spec: ProblemSpec,
    /// Normal component of D at interior faces (walls zero: no-flux).
    d_face: FaceField,
    /// div_rho_h of `d_face` — the discrete weighted divergence of D.
    div_rho_d: DensityField,
    /// c = sup (div_rho D)^- + |D|, the larger of the analytically sampled
    /// and the discrete value. Drives lambda0 and the sup-norm growth bound.
    pub drift_bound: Real,
    /// Sup bound of the mobility |b|_inf.
    pub b_sup: Real,
    face_scheme: FaceScheme,
}

impl OperatorBundle {
    /// Discretize a validated problem on n cells per axis.
    pub fn new(spec: &ProblemSpec, n: usize) -> Result<Self> {
        spec.validate()?;
        let grid = Grid::new(spec.dim, n, spec.radius)?;
        let weight = Weight::new(&grid, &spec.potential)?;

        let mut d_face = FaceField::zeros(&grid);
        let mut d_face_sup: Real = 0.0;
        for axis in 0..grid.dim() {
            for line in 0..grid.line_count() {
                for f in 1..grid.n() {
                    let x = grid.face_coords(axis, f, line);
                    let v = spec.coefficients.drift.eval(&x)[axis];
                    d_face.per_axis[axis][grid.face_flat(f, line)] = v;
                    d_face_sup = d_face_sup.max(v.abs());
                }
            }
        }
        let div_rho_d = div_rho_h(&d_face, &grid, &weight)?;

        // Admissibility constant: pointwise (div_rho D)^- + |D|, analytic
        // sampling where a divergence expression exists, always at least the
        // discrete-operator value so the scheme's own maximum principle is
        // covered by the same constant.
        let discrete_bound = div_rho_d
            .values
            .iter()
            .map(|v| (-v).max(0.0))
            .fold(0.0, Real::max)
            + d_face_sup;
        let mut sample_points: Vec<[Real; 2]> = (0..grid.cell_count()).map(|k| grid.coords(k)).collect();
        for axis in 0..grid.dim() {
            for line in 0..grid.line_count() {
                for f in 0..grid.faces_per_line() {
                    sample_points.push(grid.face_coords(axis, f, line));
                }
            }
        }
        let analytic = analytic_drift_bound(spec, &sample_points);
        let drift_bound = match analytic {
            Some(a) => a.max(discrete_bound),
            None => discrete_bound,
        };

        let b_sup = spec.coefficients.b.sup_bound(spec.sample_span);

        Ok(Self {
            grid,
            weight,
            spec: spec.clone(),
            d_face,
            div_rho_d,
            drift_bound,
            b_sup,
            face_scheme: FaceScheme::Upwind,
        })
    }

    /// Replace the face sampling rule (test hook; `Centered` breaks the
    /// monotonicity the contraction property rests on).
    pub fn with_face_scheme(mut self, scheme: FaceScheme) -> Self {
        self.face_scheme = scheme;
        self
    }

    pub fn face_scheme(&self) -> FaceScheme {
        self.face_scheme
    }

    pub fn d_face(&self) -> &FaceField {
        &self.d_face
    }

    pub fn div_rho_d(&self) -> &DensityField {
        &self.div_rho_d
    }

    /// Largest admissible resolvent step: lambda0 = 1/((c + sqrt(c))|b|_inf),
    /// infinite when the drift term vanishes.
    pub fn lambda0(&self) -> Real {
        if self.spec.coefficients.drift_vanishes() || self.drift_bound == 0.0 || self.b_sup == 0.0 {
            Real::INFINITY
        } else {
            1.0 / ((self.drift_bound + self.drift_bound.sqrt()) * self.b_sup)
        }
    }

    /// L_h u = div_rho_h grad_h u.
    pub fn apply_l(&self, u: &DensityField) -> Result<DensityField> {
        div_rho_h(&grad_h(u, &self.grid)?, &self.grid, &self.weight)
    }

    /// Drift flux F_f = eta_eps(x_f) D_f * b*_eps(u_face) with the bundle's
    /// face sampling rule; eps = 0 gives the unregularized b(u)u.
    pub fn drift_flux(&self, u: &DensityField, eps: Real) -> Result<FaceField> {
        if !u.matches(&self.grid) {
            return Err(Error::ShapeMismatch {
                expected: format!("field on a {}^{} grid", self.grid.n(), self.grid.dim()),
                got: format!("{} values", u.len()),
            });
        }
        let grid = &self.grid;
        let b = &self.spec.coefficients.b;
        let bstar = |r: Real| -> Real {
            if eps > 0.0 {
                b_star_eps_with_deriv(b, eps, r).0
            } else {
                b.eval(r) * r
            }
        };
        let mut flux = FaceField::zeros(grid);
        for axis in 0..grid.dim() {
            for line in 0..grid.line_count() {
                for f in 1..grid.n() {
                    let idx = grid.face_flat(f, line);
                    let mut d = self.d_face.per_axis[axis][idx];
                    if d == 0.0 {
                        continue;
                    }
                    if eps > 0.0 {
                        d *= eta_eps(eps, &grid.face_coords(axis, f, line));
                    }
                    let (lo, hi) = grid.face_neighbors(axis, f, line);
                    let advected = match self.face_scheme {
                        FaceScheme::Upwind => {
                            if d > 0.0 {
                                bstar(u.values[lo])
                            } else {
                                bstar(u.values[hi])
                            }
                        }
                        FaceScheme::Centered => {
                            0.5 * (bstar(u.values[lo]) + bstar(u.values[hi]))
                        }
                    };
                    flux.per_axis[axis][idx] = d * advected;
                }
            }
        }
        Ok(flux)
    }

    /// The unregularized generator A0(u) = -L_h beta(u) + div_rho_h(D b(u)u).
    pub fn apply_a0(&self, u: &DensityField) -> Result<DensityField> {
        let beta = &self.spec.coefficients.beta;
        let w = DensityField::from_values(
            &self.grid,
            u.values.iter().map(|&r| beta.eval(r)).collect(),
        )?;
        let diff = self.apply_l(&w)?;
        let drift = div_rho_h(&self.drift_flux(u, 0.0)?, &self.grid, &self.weight)?;
        Ok(drift.sub(&diff))
    }

    /// Triplet (row, col, value) export of the assembled L_h matrix, for
    /// debugging and the spectral checks.
    pub fn l_matrix_triplets(&self) -> Vec<(usize, usize, Real)> {
        let grid = &self.grid;
        let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
        let mut trip = Vec::new();
        for axis in 0..grid.dim() {
            let rho_f = &self.weight.face[axis];
            for line in 0..grid.line_count() {
                for f in 1..grid.n() {
                    let idx = grid.face_flat(f, line);
                    let (lo, hi) = grid.face_neighbors(axis, f, line);
                    let w = rho_f[idx] * inv_dx2;
                    trip.push((lo, hi, w / self.weight.cell[lo]));
                    trip.push((lo, lo, -w / self.weight.cell[lo]));
                    trip.push((hi, lo, w / self.weight.cell[hi]));
                    trip.push((hi, hi, -w / self.weight.cell[hi]));
                }
            }
        }
        trip
    }
}

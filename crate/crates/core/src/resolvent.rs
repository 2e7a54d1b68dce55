//! The implicit resolvent step u + lambda A0(u) = f.
//!
//! Solved by continuation: a geometric schedule of regularization strengths
//! eps walks the nondegenerate approximations
//!
//! ```text
//!   u - lambda L_h beta_tilde_eps(u) + lambda eps beta_tilde_eps(u)
//!     + lambda div_rho_h( eta_eps D b*_eps(u_face) ) = f
//! ```
//!
//! down to the floor, warm-starting each stage from the previous solution,
//! and a final Newton pass on the unregularized system (eps = 0) removes the
//! leftover eps-sized defect — in particular the reaction term's mass leak,
//! so the returned field conserves weighted mass to rounding.
//!
//! Each stage is a damped Newton iteration: the Jacobian
//! `I - lambda L_h diag(beta_tilde') + lambda eps diag(beta_tilde') + drift'`
//! is tridiagonal in 1D (Thomas solve) and a 5-point dense matrix in 2D
//! (LU). With upwinding it is an M-matrix, which is what makes the step an
//! L1(rho) contraction; a line search on the weighted-l1 residual guards the
//! degenerate (porous-medium) cells.
//!
//! Admissibility: drift terms cap the step at
//! `lambda0 = 1 / ((c + sqrt(c)) |b|_inf)`, `c = sup (div_rho D)^- + |D|`;
//! steps at or beyond lambda0 are rejected up front.

use crate::error::{Error, Result};
use crate::model::{norm_l1_rho, DensityField};
use crate::numeric::{comp_sum, solve_tridiagonal};
use crate::operators::{div_rho_h, grad_h, FaceScheme, OperatorBundle};
use crate::regularize::{b_star_eps_with_deriv, beta_tilde_with_deriv, eta_eps};
use crate::Real;

/// Knobs of the continuation/Newton solver. The defaults are the contract
/// the acceptance thresholds were budgeted against.
#[derive(Clone, Copy, Debug)]
pub struct ResolventConfig {
    /// Stage convergence gate: |G|_{1,rho} <= tol * (1 + |f|_{1,rho}).
    pub tol: Real,
    /// Newton iterations per stage before giving up.
    pub max_iter: usize,
    /// First regularization strength.
    pub eps0: Real,
    /// Geometric ratio between stages (0 < ratio < 1).
    pub eps_ratio: Real,
    /// Smallest positive stage before the unregularized polish.
    pub eps_floor: Real,
    /// Step-halving budget of the residual line search.
    pub max_line_search: usize,
}

impl Default for ResolventConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            eps0: 1e-1,
            eps_ratio: 0.25,
            eps_floor: 1e-6,
            max_line_search: 30,
        }
    }
}

impl ResolventConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0)
            || !(self.eps0 >= self.eps_floor)
            || !(self.eps_floor > 0.0)
            || !(self.eps_ratio > 0.0 && self.eps_ratio < 1.0)
            || self.max_iter == 0
        {
            return Err(Error::Config(format!("invalid resolvent configuration: {self:?}")));
        }
        Ok(())
    }

    /// The continuation schedule: eps0, eps0*ratio, ... down to the floor,
    /// then the floor itself if not already hit, then 0.
    pub fn schedule(&self) -> Vec<Real> {
        let mut out = Vec::new();
        let mut eps = self.eps0;
        while eps > self.eps_floor {
            out.push(eps);
            eps *= self.eps_ratio;
        }
        out.push(self.eps_floor);
        out.push(0.0);
        out
    }
}

/// Largest admissible step for a drift with constant
/// c = sup (div_rho D)^- + |D| and mobility bound b_sup:
/// lambda0 = 1/((c + sqrt(c)) b_sup), infinite if either factor vanishes.
pub fn lambda_max(drift_bound: Real, b_sup: Real) -> Real {
    if drift_bound <= 0.0 || b_sup <= 0.0 {
        Real::INFINITY
    } else {
        1.0 / ((drift_bound + drift_bound.sqrt()) * b_sup)
    }
}

/// One structured diagnostic record per Newton iterate.
#[derive(Clone, Copy, Debug)]
pub struct ResolventDiag {
    pub eps: Real,
    pub iter: usize,
    pub residual: Real,
}

/// Output of a resolvent solve.
#[derive(Clone, Debug)]
pub struct ResolventResult {
    pub u: DensityField,
    /// Final weighted-l1 residual of the *unregularized* equation.
    pub residual: Real,
    /// Newton iterations summed over all stages.
    pub newton_iters: usize,
    pub trace: Vec<ResolventDiag>,
}

/// Nonlinearity value/derivative per cell for a given stage.
fn stage_nonlinearity(
    bundle: &OperatorBundle,
    eps: Real,
    u: &[Real],
    w: &mut Vec<Real>,
    dw: &mut Vec<Real>,
) -> Result<()> {
    let beta = &bundle.spec.coefficients.beta;
    w.clear();
    dw.clear();
    for &r in u {
        if eps > 0.0 {
            let (v, d) = beta_tilde_with_deriv(beta, eps, r)?;
            w.push(v);
            dw.push(d);
        } else {
            w.push(beta.eval(r));
            dw.push(beta.deriv(r).max(0.0));
        }
    }
    Ok(())
}

/// Weighted-l1 residual of the stage equation at u, and the residual vector.
fn stage_residual(
    bundle: &OperatorBundle,
    f: &DensityField,
    lambda: Real,
    eps: Real,
    u: &DensityField,
    w: &[Real],
) -> Result<(Vec<Real>, Real)> {
    let grid = &bundle.grid;
    let w_field = DensityField::from_values(grid, w.to_vec())?;
    let lw = div_rho_h(&grad_h(&w_field, grid)?, grid, &bundle.weight)?;
    let drift = div_rho_h(&bundle.drift_flux(u, eps)?, grid, &bundle.weight)?;
    let mut g = vec![0.0; grid.cell_count()];
    for i in 0..g.len() {
        g[i] = u.values[i] - lambda * lw.values[i] + lambda * eps * w[i]
            + lambda * drift.values[i]
            - f.values[i];
    }
    let res = comp_sum(
        g.iter()
            .zip(&bundle.weight.cell)
            .map(|(gi, rho)| gi.abs() * rho),
    ) * grid.cell_volume();
    Ok((g, res))
}

/// The stage Jacobian in a shape the linear solver likes.
enum JacMatrix {
    Tri {
        sub: Vec<Real>,
        diag: Vec<Real>,
        sup: Vec<Real>,
    },
    Dense(nalgebra::DMatrix<Real>),
}

impl JacMatrix {
    fn new(bundle: &OperatorBundle) -> Self {
        let n = bundle.grid.cell_count();
        if bundle.grid.dim() == 1 {
            JacMatrix::Tri {
                sub: vec![0.0; n - 1],
                diag: vec![0.0; n],
                sup: vec![0.0; n - 1],
            }
        } else {
            JacMatrix::Dense(nalgebra::DMatrix::zeros(n, n))
        }
    }

    fn add(&mut self, row: usize, col: usize, v: Real) {
        match self {
            JacMatrix::Tri { sub, diag, sup } => {
                if col == row {
                    diag[row] += v;
                } else if col == row + 1 {
                    sup[row] += v;
                } else if col + 1 == row {
                    sub[col] += v;
                } else {
                    unreachable!("1D stencil touched non-neighbor ({row}, {col})");
                }
            }
            JacMatrix::Dense(m) => m[(row, col)] += v,
        }
    }

    fn solve(self, rhs: &[Real], eps: Real) -> Result<Vec<Real>> {
        match self {
            JacMatrix::Tri { sub, diag, sup } => {
                let mut x = rhs.to_vec();
                solve_tridiagonal(&sub, &diag, &sup, &mut x)
                    .map_err(|_| Error::SingularJacobian { eps })?;
                Ok(x)
            }
            JacMatrix::Dense(m) => {
                let b = nalgebra::DVector::from_column_slice(rhs);
                m.lu()
                    .solve(&b)
                    .map(|x| x.as_slice().to_vec())
                    .ok_or(Error::SingularJacobian { eps })
            }
        }
    }
}

/// Assemble the Newton matrix at the current iterate.
fn stage_jacobian(
    bundle: &OperatorBundle,
    lambda: Real,
    eps: Real,
    u: &[Real],
    dw: &[Real],
) -> JacMatrix {
    let grid = &bundle.grid;
    let weight = &bundle.weight;
    let inv_dx = 1.0 / grid.dx();
    let inv_dx2 = inv_dx * inv_dx;
    let mut jac = JacMatrix::new(bundle);

    // Identity and the eps-reaction term.
    let n = grid.cell_count();
    for i in 0..n {
        jac.add(i, i, 1.0 + lambda * eps * dw[i]);
    }

    let b = &bundle.spec.coefficients.b;
    let bstar_deriv = |r: Real| -> Real {
        if eps > 0.0 {
            b_star_eps_with_deriv(b, eps, r).1
        } else {
            b.deriv(r) * r + b.eval(r)
        }
    };

    for axis in 0..grid.dim() {
        let rho_f = &weight.face[axis];
        for line in 0..grid.line_count() {
            for f in 1..grid.n() {
                let idx = grid.face_flat(f, line);
                let (lo, hi) = grid.face_neighbors(axis, f, line);
                let w_lo = rho_f[idx] / weight.cell[lo];
                let w_hi = rho_f[idx] / weight.cell[hi];

                // -lambda L_h diag(dw): each face couples its two cells.
                jac.add(lo, lo, lambda * w_lo * inv_dx2 * dw[lo]);
                jac.add(lo, hi, -lambda * w_lo * inv_dx2 * dw[hi]);
                jac.add(hi, hi, lambda * w_hi * inv_dx2 * dw[hi]);
                jac.add(hi, lo, -lambda * w_hi * inv_dx2 * dw[lo]);

                // + lambda d/du div_rho_h(eta D b*(u_face)).
                let mut d = bundle.d_face().per_axis[axis][idx];
                if d == 0.0 {
                    continue;
                }
                if eps > 0.0 {
                    d *= eta_eps(eps, &grid.face_coords(axis, f, line));
                }
                match bundle.face_scheme() {
                    FaceScheme::Upwind => {
                        let donor = if d > 0.0 { lo } else { hi };
                        let q = d * bstar_deriv(u[donor]);
                        jac.add(lo, donor, lambda * w_lo * inv_dx * q);
                        jac.add(hi, donor, -lambda * w_hi * inv_dx * q);
                    }
                    FaceScheme::Centered => {
                        for donor in [lo, hi] {
                            let q = 0.5 * d * bstar_deriv(u[donor]);
                            jac.add(lo, donor, lambda * w_lo * inv_dx * q);
                            jac.add(hi, donor, -lambda * w_hi * inv_dx * q);
                        }
                    }
                }
            }
        }
    }
    jac
}

/// Solve one continuation stage by damped Newton from `start`.
///
/// Returns the stage solution, appending diagnostics to `trace`. `polish`
/// requests one extra Newton step after the gate is met (kept only if it
/// reduces the residual) — used on the final unregularized stage to push
/// the mass defect to rounding level.
#[allow(clippy::too_many_arguments)]
fn newton_stage(
    bundle: &OperatorBundle,
    f: &DensityField,
    lambda: Real,
    eps: Real,
    start: DensityField,
    cfg: &ResolventConfig,
    gate: Real,
    polish: bool,
    trace: &mut Vec<ResolventDiag>,
    total_iters: &mut usize,
) -> Result<(DensityField, Real)> {
    let mut u = start;
    let mut w = Vec::new();
    let mut dw = Vec::new();
    stage_nonlinearity(bundle, eps, &u.values, &mut w, &mut dw)?;
    let (mut g, mut res) = stage_residual(bundle, f, lambda, eps, &u, &w)?;
    trace.push(ResolventDiag { eps, iter: 0, residual: res });

    let mut polished = !polish;
    for it in 1..=cfg.max_iter {
        if res <= gate {
            if polished {
                return Ok((u, res));
            }
            polished = true; // one bonus step below
        }
        let jac = stage_jacobian(bundle, lambda, eps, &u.values, &dw);
        let delta = jac.solve(&g, eps)?;
        *total_iters += 1;
        if delta.iter().all(|d| *d == 0.0) {
            // Fixed point of the iteration; nothing can change.
            if res <= gate {
                return Ok((u, res));
            }
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
                context: format!("resolvent stage eps = {eps:e}, lambda = {lambda:e}"),
            });
        }

        // Backtracking on the weighted-l1 residual; a step is kept only if
        // it strictly improves (so the post-convergence polish step cannot
        // drift away from a converged iterate).
        let mut step = 1.0_f64;
        let mut accepted = false;
        for _ in 0..=cfg.max_line_search {
            let mut trial = u.clone();
            for i in 0..trial.values.len() {
                trial.values[i] -= step * delta[i];
            }
            stage_nonlinearity(bundle, eps, &trial.values, &mut w, &mut dw)?;
            let (g_new, res_new) = stage_residual(bundle, f, lambda, eps, &trial, &w)?;
            if res_new < res {
                u = trial;
                g = g_new;
                res = res_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        trace.push(ResolventDiag { eps, iter: it, residual: res });
        if !accepted {
            // A converged iterate that merely fails to improve further is
            // fine; otherwise the stage has stalled.
            if res <= gate {
                return Ok((u, res));
            }
            return Err(Error::NonConvergence {
                iterations: it,
                residual: res,
                context: format!("resolvent stage eps = {eps:e}, lambda = {lambda:e}"),
            });
        }
    }
    if res <= gate {
        return Ok((u, res));
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        residual: res,
        context: format!("resolvent stage eps = {eps:e}, lambda = {lambda:e}"),
    })
}

/// Solve the eps-regularized resolvent equation for one fixed eps (no
/// continuation). `warm` seeds the Newton iteration (default: f).
pub fn solve_resolvent_eps(
    bundle: &OperatorBundle,
    f: &DensityField,
    lambda: Real,
    eps: Real,
    cfg: &ResolventConfig,
    warm: Option<&DensityField>,
) -> Result<ResolventResult> {
    cfg.validate()?;
    check_inputs(bundle, f, lambda)?;
    let gate = cfg.tol * (1.0 + norm_l1_rho(f, &bundle.grid, &bundle.weight)?);
    let mut trace = Vec::new();
    let mut iters = 0;
    let start = warm.cloned().unwrap_or_else(|| f.clone());
    let (u, residual) = newton_stage(
        bundle, f, lambda, eps, start, cfg, gate, false, &mut trace, &mut iters,
    )?;
    Ok(ResolventResult {
        u,
        residual,
        newton_iters: iters,
        trace,
    })
}

/// The resolvent J_lambda f: continuation over the full eps schedule plus
/// the unregularized polish. This is the building block of the semigroup.
pub fn solve_resolvent(
    bundle: &OperatorBundle,
    f: &DensityField,
    lambda: Real,
    cfg: &ResolventConfig,
) -> Result<ResolventResult> {
    cfg.validate()?;
    check_inputs(bundle, f, lambda)?;
    let gate = cfg.tol * (1.0 + norm_l1_rho(f, &bundle.grid, &bundle.weight)?);
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut u = f.clone();
    let mut residual = Real::INFINITY;
    for eps in cfg.schedule() {
        let polish = eps == 0.0;
        let (next, res) = newton_stage(
            bundle, f, lambda, eps, u, cfg, gate, polish, &mut trace, &mut iters,
        )?;
        u = next;
        residual = res;
    }
    debug_assert!(residual <= gate);
    Ok(ResolventResult {
        u,
        residual,
        newton_iters: iters,
        trace,
    })
}

fn check_inputs(bundle: &OperatorBundle, f: &DensityField, lambda: Real) -> Result<()> {
    if !f.matches(&bundle.grid) {
        return Err(Error::ShapeMismatch {
            expected: format!("field on a {}^{} grid", bundle.grid.n(), bundle.grid.dim()),
            got: format!("{} values", f.len()),
        });
    }
    let lambda0 = bundle.lambda0();
    if !(lambda > 0.0) || lambda >= lambda0 {
        return Err(Error::StepTooLarge { lambda, lambda0 });
    }
    Ok(())
}

/// Residual of the resolvent identity
/// J_l2 f = J_l1( (l1/l2) f + (1 - l1/l2) J_l2 f ),
/// measured in the weighted l1 norm. Both steps must be admissible.
pub fn check_resolvent_identity(
    bundle: &OperatorBundle,
    f: &DensityField,
    lambda1: Real,
    lambda2: Real,
    cfg: &ResolventConfig,
) -> Result<Real> {
    let u2 = solve_resolvent(bundle, f, lambda2, cfg)?.u;
    let ratio = lambda1 / lambda2;
    let arg = f.scale(ratio).axpy(1.0, &u2.scale(1.0 - ratio));
    let via = solve_resolvent(bundle, &arg, lambda1, cfg)?.u;
    norm_l1_rho(&via.sub(&u2), &bundle.grid, &bundle.weight)
}

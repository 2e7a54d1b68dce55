//! The epsilon-regularization of the coefficients.
//!
//! The implicit resolvent equation is solved by continuation through a
//! family of nondegenerate problems:
//!
//! * beta is replaced by its Yosida-based regularization
//!   `beta_tilde(r) = beta((I + eps beta)^{-1} r) + eps r`, which is
//!   bi-Lipschitz: `eps |r-t| <= |beta_tilde(r) - beta_tilde(t)| <= (eps + 2/eps) |r-t|`;
//! * the mobility is mollified and damped,
//!   `b_eps(r) = (b * rho_eps)(r) / (1 + eps |r|)`, making it C^1 with a
//!   bounded derivative, and enters through `b_star_eps(r) = b_eps(r) r`;
//! * the drift field is cut off at radius 2/eps by
//!   `eta_eps(x) = clamp(2 - eps |x|, 0, 1)` (inactive on desk-scale boxes,
//!   kept for fidelity to the continuation scheme).
//!
//! The mollifier is the standard bump `rho(s) = C exp(-1/(1-s^2))` on
//! [-1, 1], with C fixed so the 32-point Gauss-Legendre rule integrates rho
//! to exactly 1 — then mollifying a constant returns it exactly, which the
//! scheme's conservation accounting relies on.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::{Mobility, Nonlinearity};
use crate::numeric::gl32;
use crate::Real;

/// Absolute residual tolerance of the scalar resolvent root solve.
pub const YOSIDA_TOL: Real = 1e-12;
const YOSIDA_MAX_ITER: usize = 200;

/// Solve y + eps * beta(y) = r for y, the scalar resolvent of beta.
///
/// beta monotone with beta(0) = 0 brackets the root between 0 and r; a
/// bisection-safeguarded Newton iteration converges from any start. Errors
/// only if the iteration stalls (e.g. a non-monotone custom beta).
pub fn yosida_inverse(beta: &Nonlinearity, eps: Real, r: Real) -> Result<Real> {
    debug_assert!(eps > 0.0);
    if r == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
    let g = |y: Real| y + eps * beta.eval(y) - r;

    // Newton start: linearize beta around r.
    let mut y = r / (1.0 + eps * beta.deriv(r).max(0.0));
    y = y.clamp(lo, hi);
    for _ in 0..YOSIDA_MAX_ITER {
        let gy = g(y);
        if gy.abs() <= YOSIDA_TOL {
            return Ok(y);
        }
        if gy > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let dg = 1.0 + eps * beta.deriv(y);
        let newton = y - gy / dg;
        y = if dg > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NonConvergence {
        iterations: YOSIDA_MAX_ITER,
        residual: g(y).abs(),
        context: format!("scalar resolvent of beta at r = {r:e}, eps = {eps:e}"),
    })
}

/// beta_tilde(r) = beta(yosida_inverse(r)) + eps r.
pub fn beta_tilde(beta: &Nonlinearity, eps: Real, r: Real) -> Result<Real> {
    Ok(beta_tilde_with_deriv(beta, eps, r)?.0)
}

/// Value and derivative of beta_tilde in one root solve:
/// beta_tilde'(r) = beta'(y) / (1 + eps beta'(y)) + eps > 0.
pub fn beta_tilde_with_deriv(beta: &Nonlinearity, eps: Real, r: Real) -> Result<(Real, Real)> {
    let y = yosida_inverse(beta, eps, r)?;
    let d = beta.deriv(y).max(0.0);
    Ok((beta.eval(y) + eps * r, d / (1.0 + eps * d) + eps))
}

/// The mollifier rho(s) = C exp(-1/(1-s^2)) and its derivative, with C
/// normalized against the fixed 32-point rule.
fn bump_norm() -> Real {
    static C: OnceLock<Real> = OnceLock::new();
    *C.get_or_init(|| {
        let raw: Real = gl32()
            .iter()
            .map(|&(s, w)| w * (-1.0 / (1.0 - s * s)).exp())
            .sum();
        1.0 / raw
    })
}

fn bump(s: Real) -> Real {
    if s.abs() >= 1.0 {
        0.0
    } else {
        bump_norm() * (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Mollified, damped mobility b_eps(r) = (b * rho_eps)(r) / (1 + eps |r|).
pub fn b_eps(b: &Mobility, eps: Real, r: Real) -> Real {
    b_eps_with_deriv(b, eps, r).0
}

/// (b_eps, b_eps') at r. The convolution derivative is taken through the
/// mollifier, (b * rho_eps)'(r) = (1/eps) int b(r - eps s) rho'(s) ds, so no
/// smoothness of b itself is needed.
pub fn b_eps_with_deriv(b: &Mobility, eps: Real, r: Real) -> (Real, Real) {
    // Mollifying a constant returns it exactly (and its derivative exactly
    // zero) under the tied normalization; skip the quadrature.
    let (conv, conv_d) = match b {
        Mobility::Zero => (0.0, 0.0),
        Mobility::Constant { value } => (*value, 0.0),
        _ => {
            // Differentiate under the integral at the same quadrature nodes,
            // so the reported derivative is the exact derivative of the
            // discretized value (Newton sees a consistent Jacobian).
            let mut c = 0.0;
            let mut cd = 0.0;
            for &(s, w) in gl32() {
                let arg = r - eps * s;
                c += w * b.eval(arg) * bump(s);
                cd += w * b.deriv(arg) * bump(s);
            }
            (c, cd)
        }
    };
    let damp = 1.0 + eps * r.abs();
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    let val = conv / damp;
    let deriv = (conv_d * damp - conv * eps * sign) / (damp * damp);
    (val, deriv)
}

/// b_star_eps(r) = b_eps(r) * r and its derivative.
pub fn b_star_eps_with_deriv(b: &Mobility, eps: Real, r: Real) -> (Real, Real) {
    let (be, dbe) = b_eps_with_deriv(b, eps, r);
    (be * r, dbe * r + be)
}

/// Drift cutoff profile: 1 inside |x| <= 1/eps, 0 outside |x| >= 2/eps,
/// linear in between.
pub fn eta_eps(eps: Real, x: &[Real; 2]) -> Real {
    let norm = (x[0] * x[0] + x[1] * x[1]).sqrt();
    (2.0 - eps * norm).clamp(0.0, 1.0)
}

//! Small numerical kernels shared across modules: compensated summation,
//! Gauss-Legendre quadrature nodes, and the tridiagonal (Thomas) solve used
//! by the 1D Newton steps.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::Real;

/// Neumaier-compensated sum. Reductions of weighted norms must not depend on
/// summation order at the 1e-13 level, so every norm in the crate funnels
/// through this.
pub fn comp_sum(values: impl IntoIterator<Item = Real>) -> Real {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dot product with compensated accumulation.
pub fn comp_dot(xs: &[Real], ys: &[Real]) -> Real {
    debug_assert_eq!(xs.len(), ys.len());
    comp_sum(xs.iter().zip(ys).map(|(x, y)| x * y))
}

/// Gauss-Legendre nodes and weights on [-1, 1].
///
/// Nodes are the roots of the Legendre polynomial P_n, found by Newton from
/// the Chebyshev initial guess; weights are 2 / ((1 - x^2) P_n'(x)^2).
pub fn gauss_legendre(n: usize) -> Vec<(Real, Real)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Initial guess, accurate to ~1e-3.
        let mut x = (std::f64::consts::PI * (i as Real + 0.75) / (n as Real + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_deriv(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_deriv(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Enforce exact node/weight symmetry so odd integrands cancel to zero in
    // floating point (mollifier-derivative quadratures rely on this).
    for i in 0..n / 2 {
        let (x, w) = out[n - 1 - i];
        out[i] = (-x, w);
    }
    out
}

/// P_n(x) and P_n'(x) via the three-term recurrence.
fn legendre_with_deriv(n: usize, x: Real) -> (Real, Real) {
    let mut p0 = 1.0_f64;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as Real;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = (n as Real) * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// The 32-point rule used by all mollifier quadratures, computed once.
pub fn gl32() -> &'static [(Real, Real)] {
    static RULE: OnceLock<Vec<(Real, Real)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(32))
}

/// Solve a tridiagonal system in place.
///
/// `sub[i]` couples row i+1 to column i, `sup[i]` row i to column i+1;
/// `diag` has length n, the bands length n-1. `rhs` is overwritten with the
/// solution. Fails if forward elimination hits a vanishing pivot.
pub fn solve_tridiagonal(
    sub: &[Real],
    diag: &[Real],
    sup: &[Real],
    rhs: &mut [Real],
) -> Result<()> {
    let n = diag.len();
    debug_assert_eq!(sub.len(), n - 1);
    debug_assert_eq!(sup.len(), n - 1);
    debug_assert_eq!(rhs.len(), n);

    let mut c_star = vec![0.0_f64; n - 1];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::SingularJacobian { eps: 0.0 });
    }
    c_star[0] = sup[0] / denom;
    rhs[0] /= denom;
    for i in 1..n {
        denom = diag[i] - sub[i - 1] * c_star[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::SingularJacobian { eps: 0.0 });
        }
        if i < n - 1 {
            c_star[i] = sup[i] / denom;
        }
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c_star[i] * rhs[i + 1];
    }
    Ok(())
}

/// Observed convergence order from two successive refinement errors
/// (refinement factor 2): log2(coarse / fine).
pub fn observed_order(err_coarse: Real, err_fine: Real) -> Real {
    (err_coarse / err_fine).log2()
}

/// Restriction from a once-refined cell-centered 1D grid: each coarse cell
/// value is the average of its two children. Conserves cell averages, hence
/// integrals, under the doubled cell width.
pub fn coarsen_pairs(fine: &[Real]) -> Vec<Real> {
    debug_assert!(fine.len() % 2 == 0);
    fine.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

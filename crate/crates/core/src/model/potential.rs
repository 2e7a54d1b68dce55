//! The confining potential Phi defining the weight rho = exp(-Phi).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::Real;

/// Confining potential kinds. All are normalized so Phi(0) = 0 is the
/// minimum for the built-in shapes; `check_hypotheses` samples nonnegativity
/// and wall decay for whatever is supplied.
#[derive(Clone)]
pub enum Potential {
    /// a |x|^2 (the Ornstein-Uhlenbeck family).
    Quadratic { a: Real },
    /// a |x|^4.
    Quartic { a: Real },
    /// 1D table, linearly interpolated; gradient is the segment slope.
    /// Outside the table range the last segment is extended.
    Tabulated { xs: Vec<Real>, values: Vec<Real> },
    /// Arbitrary potential with caller-supplied gradient.
    Custom {
        f: Arc<dyn Fn(&[Real; 2]) -> Real + Send + Sync>,
        grad: Arc<dyn Fn(&[Real; 2]) -> [Real; 2] + Send + Sync>,
    },
}

impl std::fmt::Debug for Potential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Potential::Quadratic { a } => f.debug_struct("Quadratic").field("a", a).finish(),
            Potential::Quartic { a } => f.debug_struct("Quartic").field("a", a).finish(),
            Potential::Tabulated { xs, .. } => f
                .debug_struct("Tabulated")
                .field("points", &xs.len())
                .finish(),
            Potential::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl Potential {
    pub fn eval(&self, x: &[Real; 2]) -> Real {
        match self {
            Potential::Quadratic { a } => a * (x[0] * x[0] + x[1] * x[1]),
            Potential::Quartic { a } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                a * r2 * r2
            }
            Potential::Tabulated { xs, values } => interp_table(xs, values, x[0]).0,
            Potential::Custom { f, .. } => f(x),
        }
    }

    pub fn grad(&self, x: &[Real; 2]) -> [Real; 2] {
        match self {
            Potential::Quadratic { a } => [2.0 * a * x[0], 2.0 * a * x[1]],
            Potential::Quartic { a } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                [4.0 * a * r2 * x[0], 4.0 * a * r2 * x[1]]
            }
            Potential::Tabulated { xs, values } => [interp_table(xs, values, x[0]).1, 0.0],
            Potential::Custom { grad, .. } => grad(x),
        }
    }

    /// Smallest box half-width R with rho(R e_k)/rho(0) <= `decay` on every
    /// axis, found by doubling + bisection. Used for the default domain.
    pub fn suggested_radius(&self, dim: usize, decay: Real) -> Result<Real> {
        let target = -decay.ln(); // need Phi(wall) - Phi(0) >= target
        if !(target > 0.0) {
            return Err(Error::Config(format!("decay threshold must be < 1, got {decay}")));
        }
        let phi0 = self.eval(&[0.0, 0.0]);
        let mut worst: Real = 0.0;
        for axis in 0..dim {
            let gap = |r: Real| {
                let mut x = [0.0, 0.0];
                x[axis] = r;
                self.eval(&x) - phi0 - target
            };
            let mut hi = 1.0_f64;
            let mut tries = 0;
            while gap(hi) < 0.0 {
                hi *= 2.0;
                tries += 1;
                if tries > 60 {
                    return Err(Error::Hypothesis {
                        hypothesis: "confinement",
                        detail: format!(
                            "potential does not reach a {decay:e} weight decay along axis {axis}"
                        ),
                    });
                }
            }
            let mut lo = hi / 2.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if gap(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            worst = worst.max(hi);
        }
        Ok(worst)
    }
}

/// Piecewise-linear table lookup: (value, slope). Clamps to the end segments.
fn interp_table(xs: &[Real], values: &[Real], x: Real) -> (Real, Real) {
    debug_assert!(xs.len() >= 2 && xs.len() == values.len());
    let m = xs.len();
    let k = match xs.binary_search_by(|t| t.total_cmp(&x)) {
        Ok(k) => k.min(m - 2),
        Err(0) => 0,
        Err(k) => (k - 1).min(m - 2),
    };
    let slope = (values[k + 1] - values[k]) / (xs[k + 1] - xs[k]);
    (values[k] + slope * (x - xs[k]), slope)
}

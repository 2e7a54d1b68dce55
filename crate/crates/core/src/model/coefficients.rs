//! Scalar nonlinearity beta, scalar mobility b and drift vector field D.

use std::sync::Arc;

use crate::Real;

/// The monotone nonlinearity beta: R -> R, beta(0) = 0, increasing.
#[derive(Clone)]
pub enum Nonlinearity {
    /// slope * r (linear diffusion; slope sigma^2/2 gives the
    /// Ornstein-Uhlenbeck family under a matching quadratic potential).
    Linear { slope: Real },
    /// coeff * sign(r) |r|^exponent, exponent >= 1 (porous medium for
    /// exponent > 1; exponent = 2 is r|r|).
    PowerLaw { coeff: Real, exponent: Real },
    /// lin * r + cubic * r^3.
    LinearPlusCubic { lin: Real, cubic: Real },
    Custom {
        f: Arc<dyn Fn(Real) -> Real + Send + Sync>,
        df: Arc<dyn Fn(Real) -> Real + Send + Sync>,
        /// Whether df is bounded on all of R (the Lipschitz claim).
        lipschitz: bool,
    },
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nonlinearity::Linear { slope } => f.debug_struct("Linear").field("slope", slope).finish(),
            Nonlinearity::PowerLaw { coeff, exponent } => f
                .debug_struct("PowerLaw")
                .field("coeff", coeff)
                .field("exponent", exponent)
                .finish(),
            Nonlinearity::LinearPlusCubic { lin, cubic } => f
                .debug_struct("LinearPlusCubic")
                .field("lin", lin)
                .field("cubic", cubic)
                .finish(),
            Nonlinearity::Custom { lipschitz, .. } => f
                .debug_struct("Custom")
                .field("lipschitz", lipschitz)
                .finish_non_exhaustive(),
        }
    }
}

impl Nonlinearity {
    pub fn eval(&self, r: Real) -> Real {
        match self {
            Nonlinearity::Linear { slope } => slope * r,
            Nonlinearity::PowerLaw { coeff, exponent } => {
                coeff * r.signum() * r.abs().powf(*exponent)
            }
            Nonlinearity::LinearPlusCubic { lin, cubic } => lin * r + cubic * r * r * r,
            Nonlinearity::Custom { f, .. } => f(r),
        }
    }

    pub fn deriv(&self, r: Real) -> Real {
        match self {
            Nonlinearity::Linear { slope } => *slope,
            Nonlinearity::PowerLaw { coeff, exponent } => {
                coeff * exponent * r.abs().powf(exponent - 1.0)
            }
            Nonlinearity::LinearPlusCubic { lin, cubic } => lin + 3.0 * cubic * r * r,
            Nonlinearity::Custom { df, .. } => df(r),
        }
    }

    /// beta'(0+): the diffusion quotient beta(u)/u is continued by this value
    /// where |u| is below the degeneracy floor.
    pub fn deriv_at_zero(&self) -> Real {
        self.deriv(0.0)
    }

    pub fn derivative_is_bounded(&self) -> bool {
        match self {
            Nonlinearity::Linear { .. } => true,
            Nonlinearity::PowerLaw { exponent, .. } => *exponent <= 1.0,
            Nonlinearity::LinearPlusCubic { cubic, .. } => *cubic == 0.0,
            Nonlinearity::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// The diffusion quotient beta(u)/u with its removable singularity
    /// continued by beta'(0) for |u| below 1e-12. Monotone beta with
    /// beta(0) = 0 makes this nonnegative; it is the scalar diffusion
    /// coefficient of the particle dynamics and the weak form.
    pub fn quotient(&self, u: Real) -> Real {
        if u.abs() < 1e-12 {
            self.deriv_at_zero()
        } else {
            self.eval(u) / u
        }
    }
}

/// Bounded scalar mobility b >= 0 multiplying the drift.
#[derive(Clone)]
pub enum Mobility {
    Zero,
    Constant { value: Real },
    /// scale / (1 + r^2): bounded, smooth, sup at r = 0.
    RationalBump { scale: Real },
    Custom {
        f: Arc<dyn Fn(Real) -> Real + Send + Sync>,
        df: Arc<dyn Fn(Real) -> Real + Send + Sync>,
    },
}

impl std::fmt::Debug for Mobility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mobility::Zero => f.write_str("Zero"),
            Mobility::Constant { value } => f.debug_struct("Constant").field("value", value).finish(),
            Mobility::RationalBump { scale } => {
                f.debug_struct("RationalBump").field("scale", scale).finish()
            }
            Mobility::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl Mobility {
    pub fn eval(&self, r: Real) -> Real {
        match self {
            Mobility::Zero => 0.0,
            Mobility::Constant { value } => *value,
            Mobility::RationalBump { scale } => scale / (1.0 + r * r),
            Mobility::Custom { f, .. } => f(r),
        }
    }

    pub fn deriv(&self, r: Real) -> Real {
        match self {
            Mobility::Zero | Mobility::Constant { .. } => 0.0,
            Mobility::RationalBump { scale } => {
                let d = 1.0 + r * r;
                -2.0 * scale * r / (d * d)
            }
            Mobility::Custom { df, .. } => df(r),
        }
    }

    /// Sup-norm bound: exact for the built-in kinds, sampled on
    /// [-span, span] for custom mobilities.
    pub fn sup_bound(&self, span: Real) -> Real {
        match self {
            Mobility::Zero => 0.0,
            Mobility::Constant { value } => value.abs(),
            Mobility::RationalBump { scale } => scale.abs(),
            Mobility::Custom { f, .. } => {
                let m = 4096;
                (0..=m)
                    .map(|k| f(-span + 2.0 * span * k as Real / m as Real).abs())
                    .fold(0.0, Real::max)
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Mobility::Zero) || matches!(self, Mobility::Constant { value } if *value == 0.0)
    }
}

/// Drift direction field D: R^d -> R^d, bounded, with divergence available
/// analytically for the built-in kinds (used for the sharp admissibility
/// constant; a discrete fallback covers custom fields without one).
#[derive(Clone)]
pub enum VectorField {
    Zero,
    Constant { components: [Real; 2] },
    /// D(x) = (amp * x_0 * exp(-|x|^2 / (2 w^2)), 0): bounded with bounded
    /// divergence, the standard nontrivial test drift.
    GaussX { amp: Real, width: Real },
    Custom {
        f: Arc<dyn Fn(&[Real; 2]) -> [Real; 2] + Send + Sync>,
        /// Analytic divergence, if the caller has one.
        div: Option<Arc<dyn Fn(&[Real; 2]) -> Real + Send + Sync>>,
    },
}

impl std::fmt::Debug for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VectorField::Zero => f.write_str("Zero"),
            VectorField::Constant { components } => f
                .debug_struct("Constant")
                .field("components", components)
                .finish(),
            VectorField::GaussX { amp, width } => f
                .debug_struct("GaussX")
                .field("amp", amp)
                .field("width", width)
                .finish(),
            VectorField::Custom { div, .. } => f
                .debug_struct("Custom")
                .field("has_divergence", &div.is_some())
                .finish_non_exhaustive(),
        }
    }
}

impl VectorField {
    pub fn eval(&self, x: &[Real; 2]) -> [Real; 2] {
        match self {
            VectorField::Zero => [0.0, 0.0],
            VectorField::Constant { components } => *components,
            VectorField::GaussX { amp, width } => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                [amp * x[0] * (-r2 / (2.0 * width * width)).exp(), 0.0]
            }
            VectorField::Custom { f, .. } => f(x),
        }
    }

    /// div D at x, when an analytic expression exists.
    pub fn divergence(&self, x: &[Real; 2]) -> Option<Real> {
        match self {
            VectorField::Zero | VectorField::Constant { .. } => Some(0.0),
            VectorField::GaussX { amp, width } => {
                let w2 = width * width;
                let r2 = x[0] * x[0] + x[1] * x[1];
                Some(amp * (-r2 / (2.0 * w2)).exp() * (1.0 - x[0] * x[0] / w2))
            }
            VectorField::Custom { div, .. } => div.as_ref().map(|d| d(x)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Constant { components } => components == &[0.0, 0.0],
            _ => false,
        }
    }
}

/// The coefficient triple (beta, b, D) of one Cauchy problem.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub beta: Nonlinearity,
    pub b: Mobility,
    pub drift: VectorField,
}

impl Coefficients {
    pub fn new(beta: Nonlinearity, b: Mobility, drift: VectorField) -> Self {
        Self { beta, b, drift }
    }

    /// Pure diffusion: no drift term at all.
    pub fn diffusion_only(beta: Nonlinearity) -> Self {
        Self {
            beta,
            b: Mobility::Zero,
            drift: VectorField::Zero,
        }
    }

    /// True when the drift term vanishes identically (b = 0 or D = 0), in
    /// which case no step-size restriction applies.
    pub fn drift_vanishes(&self) -> bool {
        self.b.is_zero() || self.drift.is_zero()
    }
}

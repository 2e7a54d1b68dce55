//! Ready-made problem configurations used by the CLI, the validation
//! harness, and the test suite.
//!
//! Two families matter in practice:
//!
//! * [`ornstein_uhlenbeck`] — linear diffusion in a quadratic well. The
//!   evolution has a closed-form Gaussian solution, which makes it the
//!   reference problem for every quantitative accuracy check.
//! * [`porous_medium`] — quadratic nonlinearity `beta(r) = r|r|` with a
//!   bounded mobility drift. Nothing about it is exactly solvable, which
//!   makes it the stress-test problem for the structural properties
//!   (contraction, positivity, mass conservation, step-size admissibility).

use crate::model::{Coefficients, Mobility, Nonlinearity, Potential, ProblemSpec, VectorField};
use crate::Real;

/// Default weight decay targeted when choosing the truncation radius: the
/// wall weight is about 1e-8 of the central weight, far below the scheme's
/// rounding floor but comfortably above the representable range.
pub const DEFAULT_WALL_DECAY: Real = 1e-8;

/// Linear diffusion `beta(r) = (sigma^2/2) r` in the well `Phi = |x|^2 / sigma^2`.
///
/// With this pairing the evolved density `v = u rho` solves the classical
/// Fokker-Planck equation of `dX = -X dt + sigma dW`, so first and second
/// moments relax at rates `e^{-t}` and `e^{-2t}` toward the stationary
/// Gaussian with variance `sigma^2 / 2` (per axis).
pub fn ornstein_uhlenbeck(dim: usize, sigma: Real) -> ProblemSpec {
    assert!(sigma > 0.0 && sigma.is_finite(), "sigma must be positive");
    let potential = Potential::Quadratic { a: 1.0 / (sigma * sigma) };
    let radius = potential
        .suggested_radius(dim, DEFAULT_WALL_DECAY)
        .expect("quadratic well always confines");
    ProblemSpec::new(
        dim,
        radius,
        potential,
        Coefficients::diffusion_only(Nonlinearity::Linear { slope: 0.5 * sigma * sigma }),
    )
}

/// Quadratic (porous-medium type) nonlinearity `beta(r) = r |r|` with a
/// constant mobility `b = 1` and a compactly concentrated drift field
/// `D = (amp x0 e^{-|x|^2/2}, 0)`, in the well `Phi = |x|^2`.
///
/// The drift admissibility constant of this configuration is about 0.6, so
/// implicit steps up to `lambda0 ~ 0.72` are admissible; the exponential
/// sup-norm growth rate `sqrt(c) |b|` is about 0.78 per unit time.
pub fn porous_medium(dim: usize) -> ProblemSpec {
    ProblemSpec::new(
        dim,
        4.5,
        Potential::Quadratic { a: 1.0 },
        Coefficients::new(
            Nonlinearity::PowerLaw { coeff: 1.0, exponent: 2.0 },
            Mobility::Constant { value: 1.0 },
            VectorField::GaussX { amp: 0.25, width: 1.0 },
        ),
    )
}

/// Advection-dominated variant of [`porous_medium`]: the same degenerate
/// nonlinearity with a twenty-fold stronger drift (`amp = 5`). Where the
/// data is small the diffusion `beta'(u) = 2|u|` nearly vanishes and the
/// cell Peclet number exceeds one, so only a monotone (upwind) face scheme
/// keeps the implicit step order-preserving; the centered average breaks
/// the weighted-l1 contraction here, which is what the scheme-mutation
/// check exploits. Admissible steps shrink accordingly (`lambda0 ~ 0.06`).
pub fn porous_medium_strong_drift(dim: usize) -> ProblemSpec {
    ProblemSpec::new(
        dim,
        4.5,
        Potential::Quadratic { a: 1.0 },
        Coefficients::new(
            Nonlinearity::PowerLaw { coeff: 1.0, exponent: 2.0 },
            Mobility::Constant { value: 1.0 },
            VectorField::GaussX { amp: 5.0, width: 1.0 },
        ),
    )
}

/// Drift-free variant of [`porous_medium`]: same nonlinearity, `b = D = 0`.
/// Every step size is admissible and the constant profile is stationary.
pub fn porous_medium_diffusive(dim: usize) -> ProblemSpec {
    ProblemSpec::new(
        dim,
        4.5,
        Potential::Quadratic { a: 1.0 },
        Coefficients::diffusion_only(Nonlinearity::PowerLaw { coeff: 1.0, exponent: 2.0 }),
    )
}

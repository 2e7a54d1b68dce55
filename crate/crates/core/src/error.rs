//! Crate-wide error type.
//!
//! Every failure mode that callers are expected to branch on gets its own
//! variant; the CLI maps these onto exit codes (config/usage errors -> 1,
//! solver non-convergence -> 2, invariant breaches -> 3).

use thiserror::Error;

use crate::Real;

#[derive(Debug, Error)]
pub enum Error {
    /// A standing hypothesis on the coefficients failed a sampled check.
    #[error("hypothesis {hypothesis} violated: {detail}")]
    Hypothesis {
        hypothesis: &'static str,
        detail: String,
    },

    /// A field/grid/operator shape disagreement.
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    /// Probability normalization of a field with no mass.
    #[error("cannot normalize: field has non-positive weighted mass {mass:e}")]
    ZeroMass { mass: Real },

    /// A face field carried nonzero flux on a boundary face.
    #[error("nonzero flux {value:e} on boundary face {face} of axis {axis}; walls are no-flux")]
    BoundaryFlux {
        axis: usize,
        face: usize,
        value: Real,
    },

    /// Step size or resolvent parameter outside the admissible window.
    #[error(
        "step size lambda = {lambda:e} is not admissible; the drift coefficients \
         require 0 < lambda < lambda0 = {lambda0:e}"
    )]
    StepTooLarge { lambda: Real, lambda0: Real },

    /// Newton iteration (or a scalar root solve) failed to converge.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e}): {context}")]
    NonConvergence {
        iterations: usize,
        residual: Real,
        context: String,
    },

    /// The Newton Jacobian lost invertibility.
    #[error("singular Jacobian in resolvent solve at eps = {eps:e}; regularization too weak")]
    SingularJacobian { eps: Real },

    /// Explicit-scheme stability limit violated.
    #[error("time step {dt:e} exceeds the stability limit {limit:e} of the explicit scheme")]
    CflViolation { dt: Real, limit: Real },

    /// A particle left the truncated domain irrecoverably.
    #[error("particle at x = {x:e} escaped the domain (radius {radius:e}); increase the truncation radius")]
    ParticleEscape { x: Real, radius: Real },

    /// Operations on an empty ensemble.
    #[error("particle ensemble is empty")]
    EmptyEnsemble,

    /// Kernel density estimation cannot proceed (all particles coincide).
    #[error("kernel density estimate degenerate: {n} particles collapsed at x = {x:e}")]
    KdeDegenerate { n: usize, x: Real },

    /// Configuration / usage error (bad key, missing file, inconsistent request).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

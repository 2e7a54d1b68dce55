//! Sampled audits of the standing hypotheses on (Phi, beta, b, D).
//!
//! These are necessarily spot checks — smoothness and global bounds cannot
//! be certified from finitely many evaluations — but they catch the
//! realistic failure modes: a beta that is not monotone or has beta(0) != 0,
//! a signed mobility, a potential too shallow for the chosen truncation
//! radius, an unbounded drift.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Real;

use super::ProblemSpec;

/// Minimum factor by which the weight must decay from its peak to the walls
/// for the no-flux truncation to be meaningful. The *default* radius targets
/// 1e-8; this hard floor only rejects plainly undersized boxes.
pub const WALL_DECAY_FLOOR: Real = 1e-4;

#[derive(Clone, Debug)]
pub struct HypothesisCheck {
    pub name: &'static str,
    /// The sampled extremal value the check keyed on.
    pub worst: Real,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, worst: Real, passed: bool, detail: String) {
        self.checks.push(HypothesisCheck {
            name,
            worst,
            passed,
            detail,
        });
    }
}

/// Audit all hypotheses by sampling. Returns the full report, or the first
/// violation as an error (with every failed check listed).
pub fn check_hypotheses(spec: &ProblemSpec) -> Result<HypothesisReport> {
    let mut report = HypothesisReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);

    // --- spatial samples: axis sweeps plus random points in the box -------
    let mut xs: Vec<[Real; 2]> = Vec::new();
    let m = 129;
    for k in 0..m {
        let t = -spec.radius + 2.0 * spec.radius * k as Real / (m - 1) as Real;
        xs.push([t, 0.0]);
        if spec.dim == 2 {
            xs.push([0.0, t]);
            xs.push([t, t]);
        }
    }
    for _ in 0..128 {
        let x = rng.random_range(-spec.radius..spec.radius);
        let y = if spec.dim == 2 {
            rng.random_range(-spec.radius..spec.radius)
        } else {
            0.0
        };
        xs.push([x, y]);
    }

    // --- potential: nonnegative, confining ---------------------------------
    let phi_min = xs
        .iter()
        .map(|x| spec.potential.eval(x))
        .fold(Real::INFINITY, Real::min);
    report.push(
        "potential nonnegative",
        phi_min,
        phi_min >= -1e-9,
        format!("sampled min Phi = {phi_min:e}"),
    );

    let mut wall_margin = Real::INFINITY;
    for axis in 0..spec.dim {
        for sign in [-1.0, 1.0] {
            let mut x = [0.0, 0.0];
            x[axis] = sign * spec.radius;
            wall_margin = wall_margin.min(spec.potential.eval(&x) - phi_min);
        }
    }
    let required = -(WALL_DECAY_FLOOR.ln());
    report.push(
        "confinement at the walls",
        wall_margin,
        wall_margin >= required,
        format!(
            "weight decays by exp(-{wall_margin:.3}) at the walls; requires at least {WALL_DECAY_FLOOR:e}"
        ),
    );

    // --- scalar samples for beta and b -------------------------------------
    let span = spec.sample_span;
    let mut rs: Vec<Real> = (0..=256)
        .map(|k| -span + 2.0 * span * k as Real / 256.0)
        .collect();
    rs.extend((0..128).map(|_| rng.random_range(-span..span)));

    let beta = &spec.coefficients.beta;
    let beta0 = beta.eval(0.0);
    report.push(
        "beta vanishes at zero",
        beta0,
        beta0.abs() <= 1e-14,
        format!("beta(0) = {beta0:e}"),
    );

    // Strict monotonicity away from 0 (degenerate diffusions may have
    // beta'(0) = 0, e.g. the porous-medium power law).
    let mut dmin = Real::INFINITY;
    let mut dmax: Real = 0.0;
    for &r in &rs {
        let d = beta.deriv(r);
        if r.abs() > 1e-6 * span {
            dmin = dmin.min(d);
        }
        dmax = dmax.max(d.abs());
    }
    report.push(
        "beta strictly increasing off zero",
        dmin,
        dmin > 0.0,
        format!("min beta' off zero = {dmin:e} over [-{span}, {span}]"),
    );
    if spec.beta_lipschitz {
        report.push(
            "beta derivative bounded (claimed)",
            dmax,
            dmax.is_finite(),
            format!("max |beta'| = {dmax:e} over [-{span}, {span}]"),
        );
    }

    let b = &spec.coefficients.b;
    let bmin = rs.iter().map(|&r| b.eval(r)).fold(Real::INFINITY, Real::min);
    let bsup = b.sup_bound(span);
    report.push(
        "mobility nonnegative and bounded",
        bmin,
        bmin >= -1e-12 && bsup.is_finite(),
        format!("min b = {bmin:e}, sup bound {bsup:e}"),
    );

    // --- drift field: bounded, weighted divergence bounded below -----------
    let drift = &spec.coefficients.drift;
    let mut dsup: Real = 0.0;
    let mut div_neg: Real = 0.0;
    let mut have_div = true;
    for x in &xs {
        let v = drift.eval(x);
        dsup = dsup.max((v[0] * v[0] + v[1] * v[1]).sqrt());
        match drift.divergence(x) {
            Some(dv) => {
                let g = spec.potential.grad(x);
                let weighted = dv - (g[0] * v[0] + g[1] * v[1]);
                div_neg = div_neg.max(-weighted);
            }
            None => have_div = false,
        }
    }
    report.push(
        "drift bounded",
        dsup,
        dsup.is_finite(),
        format!("sampled sup |D| = {dsup:e}"),
    );
    if have_div {
        report.push(
            "weighted drift divergence bounded below",
            div_neg,
            div_neg.is_finite(),
            format!("sampled sup (div_rho D)^- = {div_neg:e}"),
        );
    }

    if report.passed() {
        Ok(report)
    } else {
        let failed: Vec<String> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        Err(Error::Hypothesis {
            hypothesis: "coefficient hypotheses",
            detail: failed.join("; "),
        })
    }
}

/// Sampled sup of (div_rho D)^- and |D| from the analytic divergence, when
/// available: the ingredients of the admissibility constant. Returns None if
/// the drift has no analytic divergence.
pub fn analytic_drift_bound(spec: &ProblemSpec, extra_points: &[[Real; 2]]) -> Option<Real> {
    let drift = &spec.coefficients.drift;
    let mut worst: Real = 0.0;
    for x in extra_points {
        let v = drift.eval(x);
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let dv = drift.divergence(x)?;
        let g = spec.potential.grad(x);
        let weighted = dv - (g[0] * v[0] + g[1] * v[1]);
        worst = worst.max((-weighted).max(0.0) + norm);
    }
    Some(worst)
}

//! Time evolution by composing implicit resolvent steps.
//!
//! The evolution operator is the exponential-formula limit of repeated
//! resolvent applications: `u(T) ~ (J_{T/n})^n u0`. This module iterates the
//! steps, records per-step monitors (mass, sup, min, Newton work), thins the
//! stored fields to a bounded count, and provides the structural checks that
//! the trajectory is supposed to satisfy:
//!
//! * the discrete semigroup property (exact for matched step sizes),
//! * the exponential sup-norm growth bound with rate `sqrt(c)`,
//! * the weak (distributional) form of the equation against smooth test
//!   functions with analytic derivatives — an independent consistency check
//!   that reuses none of the discrete operators.

use crate::error::{Error, Result};
use crate::model::{norm_l1_rho, norm_linf, rho_mass, DensityField};
use crate::numeric::comp_sum;
use crate::operators::OperatorBundle;
use crate::resolvent::{solve_resolvent, ResolventConfig, ResolventResult};
use crate::Real;

/// Maximum number of stored fields per trajectory; runs with more steps keep
/// every `ceil(steps/STORE_CAP)`-th field plus both endpoints.
pub const STORE_CAP: usize = 256;

/// Scalar diagnostics recorded after every step (and at t = 0).
#[derive(Clone, Debug)]
pub struct StepMonitor {
    pub t: Real,
    /// Weighted mass <u, 1>_rho.
    pub mass: Real,
    /// Sup norm |u|_inf.
    pub sup: Real,
    /// Pointwise minimum.
    pub min: Real,
    /// Newton iterations spent on this step (0 for the initial record).
    pub newton_iters: usize,
    /// Final solver residual of this step.
    pub residual: Real,
}

/// Result of [`evolve`]: thinned fields, full monitor series, breach flags.
pub struct Trajectory {
    pub horizon: Real,
    pub steps: usize,
    /// Step size horizon / steps.
    pub h: Real,
    /// Times of the stored fields (always includes 0 and the horizon).
    pub times: Vec<Real>,
    /// Stored fields, aligned with `times`.
    pub fields: Vec<DensityField>,
    /// One record per step, plus the initial state.
    pub monitors: Vec<StepMonitor>,
    /// Structural violations observed along the run (non-fatal): one entry
    /// per kind, recorded at first occurrence.
    pub breaches: Vec<String>,
}

impl Trajectory {
    pub fn initial(&self) -> &DensityField {
        &self.fields[0]
    }

    pub fn final_field(&self) -> &DensityField {
        self.fields.last().expect("trajectory stores endpoints")
    }

    /// Latest stored sample with time <= t (left-endpoint lookup, clamped to
    /// the first sample). Returns the sample time and the field.
    pub fn at_or_before(&self, t: Real) -> (Real, &DensityField) {
        let mut k = 0;
        while k + 1 < self.times.len() && self.times[k + 1] <= t {
            k += 1;
        }
        (self.times[k], &self.fields[k])
    }

    /// True when every step's field was stored (no thinning).
    pub fn is_fully_stored(&self) -> bool {
        self.fields.len() == self.steps + 1
    }
}

/// One implicit step of size h: a thin alias for the resolvent.
pub fn step(
    bundle: &OperatorBundle,
    u: &DensityField,
    h: Real,
    cfg: &ResolventConfig,
) -> Result<ResolventResult> {
    solve_resolvent(bundle, u, h, cfg)
}

/// Evolve u0 over `[0, horizon]` with `steps` implicit steps of size
/// `horizon/steps`, which must be below the admissibility bound lambda0.
///
/// Monitors are recorded for every step. Breaches of the structural
/// invariants (relative mass drift above 1e-9 per unit time, pointwise
/// minimum below -1e-10 for nonnegative data, sup norm above the
/// `exp(sqrt(c) t)` growth bound by more than 1e-6 relative) are flagged in
/// `breaches` but do not abort the run.
pub fn evolve(
    bundle: &OperatorBundle,
    u0: &DensityField,
    horizon: Real,
    steps: usize,
    cfg: &ResolventConfig,
) -> Result<Trajectory> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    let h = horizon / steps as Real;
    let lambda0 = bundle.lambda0();
    if h >= lambda0 {
        return Err(Error::StepTooLarge { lambda: h, lambda0 });
    }

    let mass0 = rho_mass(u0, &bundle.grid, &bundle.weight)?;
    let sup0 = norm_linf(u0);
    let min0 = u0.min();
    let nonneg_start = min0 >= -1e-12 * sup0.max(1.0);
    let growth_rate = bundle.drift_bound.sqrt() * bundle.b_sup;

    let stride = steps.div_ceil(STORE_CAP);
    let mut times = vec![0.0];
    let mut fields = vec![u0.clone()];
    let mut monitors = vec![StepMonitor {
        t: 0.0,
        mass: mass0,
        sup: sup0,
        min: min0,
        newton_iters: 0,
        residual: 0.0,
    }];
    let mut breaches: Vec<String> = Vec::new();
    let breach = |list: &mut Vec<String>, kind: &str, detail: String| {
        if !list.iter().any(|b| b.starts_with(kind)) {
            list.push(format!("{kind}: {detail}"));
        }
    };

    let mut u = u0.clone();
    for k in 1..=steps {
        let out = solve_resolvent(bundle, &u, h, cfg)?;
        u = out.u;
        let t = k as Real * h;
        let mass = rho_mass(&u, &bundle.grid, &bundle.weight)?;
        let sup = norm_linf(&u);
        let min = u.min();
        monitors.push(StepMonitor {
            t,
            mass,
            sup,
            min,
            newton_iters: out.newton_iters,
            residual: out.residual,
        });

        if (mass - mass0).abs() > 1e-9 * mass0.abs().max(1.0) * t {
            breach(
                &mut breaches,
                "mass-drift",
                format!("|m(t)-m(0)| = {:e} at t = {t}", (mass - mass0).abs()),
            );
        }
        if nonneg_start && min < -1e-10 {
            breach(&mut breaches, "positivity", format!("min u = {min:e} at t = {t}"));
        }
        if sup > (growth_rate * t).exp() * sup0 * (1.0 + 1e-6) {
            breach(
                &mut breaches,
                "sup-growth",
                format!("|u|_inf = {sup:e} vs bound {:e} at t = {t}", (growth_rate * t).exp() * sup0),
            );
        }

        if k % stride == 0 || k == steps {
            times.push(t);
            fields.push(u.clone());
        }
    }

    Ok(Trajectory {
        horizon,
        steps,
        h,
        times,
        fields,
        monitors,
        breaches,
    })
}

/// Residual of the semigroup property at matched resolution:
/// `|S_h^n u0 - S_h^{n_t}(S_h^{n_s} u0)|_{1,rho}` where every step uses the
/// same size h = (t+s)/n and `n_s` h = s. Since both sides compose the same
/// resolvent chain, the residual is pure solver noise (<= 1e-10 in the
/// default configuration). `s = 0` degenerates to comparing one run with
/// itself, which is exactly zero by determinism.
pub fn check_semigroup_property(
    bundle: &OperatorBundle,
    u0: &DensityField,
    t: Real,
    s: Real,
    n: usize,
    cfg: &ResolventConfig,
) -> Result<Real> {
    if !(t > 0.0) || s < 0.0 || n == 0 {
        return Err(Error::Config(format!(
            "need t > 0, s >= 0, n >= 1, got t = {t}, s = {s}, n = {n}"
        )));
    }
    let h = (t + s) / n as Real;
    let ns = (s / h).round() as usize;
    if ((ns as Real * h) - s).abs() > 1e-9 * (t + s) {
        return Err(Error::Config(format!(
            "split time s = {s} is not a multiple of h = {h}; choose n so both t and s are resolved"
        )));
    }
    let nt = n - ns;
    let whole = evolve(bundle, u0, t + s, n, cfg)?;
    let mid = if ns > 0 {
        evolve(bundle, u0, s, ns, cfg)?.final_field().clone()
    } else {
        u0.clone()
    };
    let composed = if nt > 0 {
        evolve(bundle, &mid, t, nt, cfg)?.final_field().clone()
    } else {
        mid
    };
    norm_l1_rho(
        &whole.final_field().sub(&composed),
        &bundle.grid,
        &bundle.weight,
    )
}

/// Semigroup defect at deliberately mismatched resolution: one run over
/// `t + s` with n steps versus two runs of n steps each over s then t. The
/// two sides use different step sizes, so the defect measures the scheme's
/// O(h) consistency and must shrink under refinement.
pub fn semigroup_defect_mismatched(
    bundle: &OperatorBundle,
    u0: &DensityField,
    t: Real,
    s: Real,
    n: usize,
    cfg: &ResolventConfig,
) -> Result<Real> {
    if !(t > 0.0 && s > 0.0) || n == 0 {
        return Err(Error::Config(format!(
            "need t, s > 0 and n >= 1, got t = {t}, s = {s}, n = {n}"
        )));
    }
    let whole = evolve(bundle, u0, t + s, n, cfg)?;
    let first = evolve(bundle, u0, s, n, cfg)?;
    let second = evolve(bundle, first.final_field(), t, n, cfg)?;
    norm_l1_rho(
        &whole.final_field().sub(second.final_field()),
        &bundle.grid,
        &bundle.weight,
    )
}

/// Worst ratio of the observed sup norm to the exponential growth bound
/// `exp(sqrt(c) |b|_inf t) |u0|_inf` over the whole monitor series. The
/// contract is <= 1 + 1e-6; a zero initial state yields 0 by convention.
pub fn check_linf_growth(bundle: &OperatorBundle, trajectory: &Trajectory) -> Real {
    let sup0 = trajectory.monitors[0].sup;
    if sup0 == 0.0 {
        return 0.0;
    }
    let rate = bundle.drift_bound.sqrt() * bundle.b_sup;
    trajectory
        .monitors
        .iter()
        .map(|m| m.sup / ((rate * m.t).exp() * sup0))
        .fold(0.0, Real::max)
}

/// Smooth test functions with analytic derivatives for the weak-form check.
#[derive(Clone, Debug)]
pub enum TestFunction {
    /// phi == value everywhere: all derivatives vanish, so the weak-form
    /// residual reduces to the mass-conservation defect.
    Constant { value: Real },
    /// phi(x) = exp(-|x - center|^2 / (2 width^2)).
    Gaussian { center: [Real; 2], width: Real },
}

impl TestFunction {
    pub fn eval(&self, x: &[Real; 2], dim: usize) -> Real {
        match self {
            TestFunction::Constant { value } => *value,
            TestFunction::Gaussian { center, width } => {
                (-Self::r2(x, center, dim) / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn grad(&self, x: &[Real; 2], dim: usize) -> [Real; 2] {
        match self {
            TestFunction::Constant { .. } => [0.0, 0.0],
            TestFunction::Gaussian { center, width } => {
                let phi = self.eval(x, dim);
                let w2 = width * width;
                let mut g = [0.0, 0.0];
                for (k, gk) in g.iter_mut().enumerate().take(dim) {
                    *gk = -(x[k] - center[k]) / w2 * phi;
                }
                g
            }
        }
    }

    pub fn laplacian(&self, x: &[Real; 2], dim: usize) -> Real {
        match self {
            TestFunction::Constant { .. } => 0.0,
            TestFunction::Gaussian { center, width } => {
                let phi = self.eval(x, dim);
                let w2 = width * width;
                (Self::r2(x, center, dim) / (w2 * w2) - dim as Real / w2) * phi
            }
        }
    }

    fn r2(x: &[Real; 2], center: &[Real; 2], dim: usize) -> Real {
        let mut s = 0.0;
        for k in 0..dim {
            let d = x[k] - center[k];
            s += d * d;
        }
        s
    }
}

/// Residual of the distributional (weak) form at the final time:
///
/// `int phi dnu(T) - int phi dnu(0)
///    - int_0^T int [ a(u) lap(phi) + (b(u) D - a(u) grad(Phi)) . grad(phi) ] dnu(s) ds`
///
/// with `nu(t) = u(t) rho dx`, `a(u) = beta(u)/u` (extended by `beta'(0)` at
/// u = 0), analytic derivatives of phi, and the trapezoid rule in time over
/// the stored samples. An independent consistency check: no discrete
/// operator from the solver is reused. The residual is O(h + dx^2).
///
/// Errors if phi is not negligible at the domain walls (relative to its
/// interior size), since the identity holds only for compactly supported
/// test functions.
pub fn weak_form_residual(
    bundle: &OperatorBundle,
    trajectory: &Trajectory,
    phi: &TestFunction,
) -> Result<Real> {
    let grid = &bundle.grid;
    let dim = grid.dim();

    // Wall-support check: derivative magnitude on the boundary must be
    // negligible against the interior scale.
    let mut interior_scale: Real = 0.0;
    for k in 0..grid.cell_count() {
        let x = grid.coords(k);
        let g = phi.grad(&x, dim);
        interior_scale = interior_scale
            .max(phi.eval(&x, dim).abs())
            .max(g[0].abs() + g[1].abs())
            .max(phi.laplacian(&x, dim).abs());
    }
    let mut wall_scale: Real = 0.0;
    for axis in 0..dim {
        for line in 0..grid.line_count() {
            for f in [0, grid.n()] {
                let x = grid.face_coords(axis, f, line);
                let g = phi.grad(&x, dim);
                wall_scale = wall_scale
                    .max(g[0].abs() + g[1].abs())
                    .max(phi.laplacian(&x, dim).abs());
            }
        }
    }
    if wall_scale > 1e-6 * interior_scale {
        return Err(Error::Config(format!(
            "test function is not supported inside the box: wall derivative scale {wall_scale:e} \
             vs interior scale {interior_scale:e}"
        )));
    }

    let beta = &bundle.spec.coefficients.beta;
    let a_at = |u: Real| beta.quotient(u);

    // Space integral of the generator term at one time sample.
    let generator = |u: &DensityField| -> Real {
        let mut terms = Vec::with_capacity(grid.cell_count());
        for k in 0..grid.cell_count() {
            let x = grid.coords(k);
            let uv = u.values[k];
            let a = a_at(uv);
            let gphi = phi.grad(&x, dim);
            let lphi = phi.laplacian(&x, dim);
            let gpot = bundle.spec.potential.grad(&x);
            let d = bundle.spec.coefficients.drift.eval(&x);
            let bval = bundle.spec.coefficients.b.eval(uv);
            let mut dot = 0.0;
            for c in 0..dim {
                dot += (bval * d[c] - a * gpot[c]) * gphi[c];
            }
            terms.push((a * lphi + dot) * uv * bundle.weight.cell[k]);
        }
        comp_sum(terms) * grid.cell_volume()
    };

    let pair = |u: &DensityField| -> Real {
        let mut terms = Vec::with_capacity(grid.cell_count());
        for k in 0..grid.cell_count() {
            terms.push(phi.eval(&grid.coords(k), dim) * u.values[k] * bundle.weight.cell[k]);
        }
        comp_sum(terms) * grid.cell_volume()
    };

    let lhs = pair(trajectory.final_field()) - pair(trajectory.initial());
    let mut rhs_terms = Vec::with_capacity(trajectory.times.len());
    for i in 0..trajectory.times.len() - 1 {
        let dt = trajectory.times[i + 1] - trajectory.times[i];
        rhs_terms
            .push(0.5 * dt * (generator(&trajectory.fields[i]) + generator(&trajectory.fields[i + 1])));
    }
    let rhs = comp_sum(rhs_terms);
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_probability, Coefficients, Nonlinearity, Potential, ProblemSpec};
    use crate::presets;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_over_rho(bundle: &OperatorBundle, mean: Real, var: Real) -> DensityField {
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        DensityField::from_fn(&bundle.grid, |x| {
            let p = norm * (-(x[0] - mean) * (x[0] - mean) / (2.0 * var)).exp();
            p * bundle.spec.potential.eval(x).exp()
        })
    }

    #[test]
    fn stationary_state_stays_put() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 128).unwrap();
        let u0 = normalize_probability(
            &DensityField::constant(&bundle.grid, 1.0),
            &bundle.grid,
            &bundle.weight,
        )
        .unwrap();
        let traj = evolve(&bundle, &u0, 1.0, 16, &ResolventConfig::default()).unwrap();
        let gap = norm_l1_rho(
            &traj.final_field().sub(&u0),
            &bundle.grid,
            &bundle.weight,
        )
        .unwrap();
        assert!(gap <= 1e-9, "stationary drift {gap:e}");
        assert!(traj.breaches.is_empty(), "breaches: {:?}", traj.breaches);
    }

    #[test]
    fn ou_run_tracks_the_gaussian_marginal() {
        // Coarse-resolution version of the closed-form oracle comparison:
        // p(t) = N(m0 e^{-t}, v0 e^{-2t} + (1 - e^{-2t})/2).
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 256).unwrap();
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let t = 0.5;
        let traj = evolve(&bundle, &u0, t, 32, &ResolventConfig::default()).unwrap();
        let mean = (-t as Real).exp();
        let var = 0.04 * (-2.0 * t).exp() + 0.5 * (1.0 - (-2.0 * t).exp());
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        let mut err_terms = Vec::new();
        for k in 0..bundle.grid.cell_count() {
            let x = bundle.grid.center(k);
            let p_exact = norm * (-(x - mean) * (x - mean) / (2.0 * var)).exp();
            let p_num = traj.final_field().values[k] * bundle.weight.cell[k];
            err_terms.push((p_num - p_exact).abs());
        }
        let l1 = comp_sum(err_terms) * bundle.grid.cell_volume();
        assert!(l1 <= 5e-2, "L1 density error {l1:e}");
        assert!(traj.breaches.is_empty(), "breaches: {:?}", traj.breaches);
    }

    #[test]
    fn refinement_gap_shrinks_on_the_ou_problem() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 64).unwrap();
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let cfg = ResolventConfig::default();
        let run = |n: usize| evolve(&bundle, &u0, 0.5, n, &cfg).unwrap().final_field().clone();
        let (u8s, u16s, u32s) = (run(8), run(16), run(32));
        let g1 = norm_l1_rho(&u16s.sub(&u8s), &bundle.grid, &bundle.weight).unwrap();
        let g2 = norm_l1_rho(&u32s.sub(&u16s), &bundle.grid, &bundle.weight).unwrap();
        assert!(g2 < g1, "refinement gaps {g1:e} -> {g2:e} not decreasing");
    }

    #[test]
    fn matched_resolution_semigroup_residual_is_solver_noise() {
        let spec = presets::porous_medium(1);
        let bundle = OperatorBundle::new(&spec, 64).unwrap();
        let u0 = normalize_probability(
            &DensityField::from_fn(&bundle.grid, |x| (-(x[0] + 1.0).powi(2)).exp()),
            &bundle.grid,
            &bundle.weight,
        )
        .unwrap();
        let cfg = ResolventConfig::default();
        let res = check_semigroup_property(&bundle, &u0, 0.5, 0.5, 16, &cfg).unwrap();
        assert!(res <= 1e-10, "matched semigroup residual {res:e}");
        // s = 0: identical runs, identically zero by determinism.
        let res0 = check_semigroup_property(&bundle, &u0, 1.0, 0.0, 16, &cfg).unwrap();
        assert_eq!(res0, 0.0);
    }

    #[test]
    fn mismatched_resolution_defect_shrinks() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 64).unwrap();
        let u0 = gaussian_over_rho(&bundle, 0.5, 0.1);
        let cfg = ResolventConfig::default();
        let d1 = semigroup_defect_mismatched(&bundle, &u0, 0.7, 0.3, 8, &cfg).unwrap();
        let d2 = semigroup_defect_mismatched(&bundle, &u0, 0.7, 0.3, 16, &cfg).unwrap();
        assert!(d2 < d1, "mismatched defects {d1:e} -> {d2:e} not decreasing");
    }

    #[test]
    fn two_trajectories_contract_monotonically() {
        let spec = presets::porous_medium(1);
        let bundle = OperatorBundle::new(&spec, 48).unwrap();
        let cfg = ResolventConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mk = |rng: &mut ChaCha8Rng| {
            DensityField::from_values(
                &bundle.grid,
                (0..bundle.grid.cell_count())
                    .map(|_| rng.random_range(0.0..2.0))
                    .collect(),
            )
            .unwrap()
        };
        let (u0, w0) = (mk(&mut rng), mk(&mut rng));
        let (tu, tw) = (
            evolve(&bundle, &u0, 0.5, 8, &cfg).unwrap(),
            evolve(&bundle, &w0, 0.5, 8, &cfg).unwrap(),
        );
        assert!(tu.is_fully_stored() && tw.is_fully_stored());
        let mut prev = Real::INFINITY;
        for (a, b) in tu.fields.iter().zip(&tw.fields) {
            let d = norm_l1_rho(&a.sub(b), &bundle.grid, &bundle.weight).unwrap();
            assert!(d <= prev * (1.0 + 1e-12) + 1e-14, "distance grew: {prev:e} -> {d:e}");
            prev = d;
        }
    }

    #[test]
    fn sup_growth_stays_inside_the_exponential_envelope() {
        let spec = presets::porous_medium(1);
        let bundle = OperatorBundle::new(&spec, 64).unwrap();
        let u0 = DensityField::from_fn(&bundle.grid, |x| (-(x[0]).abs()).exp());
        let cfg = ResolventConfig::default();
        let traj = evolve(&bundle, &u0, 1.0, 32, &cfg).unwrap();
        let worst = check_linf_growth(&bundle, &traj);
        assert!(worst <= 1.0 + 1e-6, "growth ratio {worst}");
        // Drift-free: the sup norm must be nonincreasing outright.
        let spec0 = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle0 = OperatorBundle::new(&spec0, 64).unwrap();
        let u00 = gaussian_over_rho(&bundle0, 0.0, 0.2);
        let traj0 = evolve(&bundle0, &u00, 0.5, 8, &cfg).unwrap();
        assert!(check_linf_growth(&bundle0, &traj0) <= 1.0 + 1e-12);
        // Zero initial state: ratio 0 by convention.
        let z = DensityField::zeros(&bundle0.grid);
        let trajz = evolve(&bundle0, &z, 0.25, 4, &cfg).unwrap();
        assert_eq!(check_linf_growth(&bundle0, &trajz), 0.0);
    }

    #[test]
    fn weak_form_with_constant_test_function_is_mass_defect() {
        let spec = presets::porous_medium(1);
        let bundle = OperatorBundle::new(&spec, 64).unwrap();
        let u0 = normalize_probability(
            &DensityField::from_fn(&bundle.grid, |x| (-x[0] * x[0]).exp()),
            &bundle.grid,
            &bundle.weight,
        )
        .unwrap();
        let traj = evolve(&bundle, &u0, 0.5, 8, &ResolventConfig::default()).unwrap();
        let res = weak_form_residual(&bundle, &traj, &TestFunction::Constant { value: 2.0 }).unwrap();
        assert!(res <= 1e-9, "mass defect through weak form: {res:e}");
    }

    #[test]
    fn weak_form_residual_is_small_and_zero_for_zero_data() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 128).unwrap();
        let phi = TestFunction::Gaussian { center: [0.0, 0.0], width: std::f64::consts::FRAC_1_SQRT_2 };
        let u0 = gaussian_over_rho(&bundle, 0.5, 0.1);
        let traj = evolve(&bundle, &u0, 0.5, 64, &ResolventConfig::default()).unwrap();
        let res = weak_form_residual(&bundle, &traj, &phi).unwrap();
        assert!(res <= 5e-3, "weak-form residual {res:e}");

        let z = DensityField::zeros(&bundle.grid);
        let trajz = evolve(&bundle, &z, 0.25, 4, &ResolventConfig::default()).unwrap();
        assert_eq!(weak_form_residual(&bundle, &trajz, &phi).unwrap(), 0.0);
    }

    #[test]
    fn wide_test_functions_are_rejected() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 32).unwrap();
        let u0 = DensityField::constant(&bundle.grid, 1.0);
        let traj = evolve(&bundle, &u0, 0.1, 2, &ResolventConfig::default()).unwrap();
        let wide = TestFunction::Gaussian { center: [0.0, 0.0], width: 4.0 };
        assert!(weak_form_residual(&bundle, &traj, &wide).is_err());
    }

    #[test]
    fn thinning_caps_stored_fields_and_keeps_endpoints() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 16).unwrap();
        let u0 = DensityField::constant(&bundle.grid, 1.0);
        let traj = evolve(&bundle, &u0, 0.6, 600, &ResolventConfig::default()).unwrap();
        assert!(traj.fields.len() <= STORE_CAP + 2);
        assert_eq!(traj.times[0], 0.0);
        assert!((traj.times.last().unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(traj.monitors.len(), 601);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        // Left-endpoint lookup lands on a stored sample at or before t.
        let (ts, _) = traj.at_or_before(0.31);
        assert!(ts <= 0.31 && ts >= 0.31 - 3.0 * traj.h * (600_f64 / 256.0).ceil());
        // Oversized steps are rejected up front, naming the bound. This
        // needs a drifted problem: without drift every step is admissible.
        let drifted = OperatorBundle::new(&presets::porous_medium(1), 16).unwrap();
        let w0 = DensityField::constant(&drifted.grid, 1.0);
        let big = evolve(&drifted, &w0, 10.0, 2, &ResolventConfig::default());
        assert!(matches!(big, Err(crate::Error::StepTooLarge { .. })));
    }

    #[test]
    fn rejects_unresolvable_split_times() {
        let spec = presets::ornstein_uhlenbeck(1, 1.0);
        let bundle = OperatorBundle::new(&spec, 16).unwrap();
        let u0 = DensityField::constant(&bundle.grid, 1.0);
        let bad = check_semigroup_property(&bundle, &u0, 0.7, 0.21, 4, &ResolventConfig::default());
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn evolve_rejects_degenerate_parameters() {
        let spec = ProblemSpec::new(
            1,
            4.0,
            Potential::Quadratic { a: 1.0 },
            Coefficients::diffusion_only(Nonlinearity::Linear { slope: 1.0 }),
        );
        let bundle = OperatorBundle::new(&spec, 16).unwrap();
        let u0 = DensityField::constant(&bundle.grid, 1.0);
        assert!(evolve(&bundle, &u0, 0.0, 4, &ResolventConfig::default()).is_err());
        assert!(evolve(&bundle, &u0, 1.0, 0, &ResolventConfig::default()).is_err());
    }
}

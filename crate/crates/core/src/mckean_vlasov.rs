//! Particle-level counterpart of the deterministic solver (1D).
//!
//! The evolved density drives a stochastic differential equation whose
//! coefficients depend on the solution's own density u:
//!
//! ```text
//! dX = [ D(X) b(u(X)) - (beta(u(X))/u(X)) grad Phi(X) ] dt
//!      + sqrt(2 beta(u(X))/u(X)) dW,
//! ```
//!
//! so that the law of `X_t` has density `v(t) = u(t) rho` when `X_0 ~ v(0)`.
//! Two drivers are provided:
//!
//! * [`simulate_pde_driven`] reads u from a finished PDE trajectory
//!   (linear interpolation in space, left endpoint in time) — this is the
//!   superposition check: particles driven by the PDE density must reproduce
//!   the PDE marginals.
//! * [`simulate_self_consistent`] estimates the density from the particles
//!   themselves every step (Gaussian kernel density estimate, Silverman
//!   bandwidth by default) — the genuinely nonlinear McKean–Vlasov dynamics.
//!
//! Walls reflect (pairing with the PDE scheme's zero-flux walls); both
//! approximate the same whole-space problem. Per-particle counter-mode RNG
//! streams make runs bitwise reproducible and schedule-independent.
//!
//! The module also houses the closed-form Ornstein–Uhlenbeck oracle, the
//! marginal-comparison metrics (L¹ of binned densities, 1D Wasserstein-1),
//! and an independent explicit solver for the linearized (frozen-coefficient)
//! equation used to cross-check the flow/uniqueness structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::DensityField;
use crate::numeric::comp_sum;
use crate::operators::OperatorBundle;
use crate::semigroup::Trajectory;
use crate::Real;

/// Final state of a particle run.
pub struct ParticleEnsemble {
    /// Particle positions (1D).
    pub positions: Vec<Real>,
    /// Time reached.
    pub t: Real,
    /// Base seed; particle j consumed stream j + 1, initial sampling stream 0.
    pub seed: u64,
    /// Smallest diffusion argument 2 beta(u)/u seen before clipping at zero.
    /// Monotone beta with beta(0) = 0 keeps this >= 0 up to rounding.
    pub min_diffusion_arg: Real,
}

/// Closed-form marginals of the classical Ornstein–Uhlenbeck process
/// `dX = -X dt + sigma dW`: mean `m0 e^{-t}`, variance
/// `var0 e^{-2t} + (sigma^2/2)(1 - e^{-2t})`.
pub fn ou_exact_marginal(m0: Real, var0: Real, sigma: Real, t: Real) -> (Real, Real) {
    assert!(var0 >= 0.0, "variance must be nonnegative");
    assert!(sigma > 0.0, "sigma must be positive");
    let decay = (-t).exp();
    (
        m0 * decay,
        var0 * decay * decay + 0.5 * sigma * sigma * (1.0 - decay * decay),
    )
}

fn require_1d(bundle: &OperatorBundle) -> Result<()> {
    if bundle.grid.dim() != 1 {
        return Err(Error::Config(
            "particle simulation supports one spatial dimension only".into(),
        ));
    }
    Ok(())
}

/// Linear interpolation of a cell-centered field at x, clamped to the
/// outermost centers (constant extension in the half-cell wall strips).
fn interp_at(values: &[Real], bundle: &OperatorBundle, x: Real) -> Real {
    let grid = &bundle.grid;
    let n = grid.n();
    if n == 1 {
        return values[0];
    }
    let pos = (x + grid.radius()) / grid.dx() - 0.5;
    let i0 = (pos.floor() as isize).clamp(0, n as isize - 2) as usize;
    let frac = (pos - i0 as Real).clamp(0.0, 1.0);
    values[i0] * (1.0 - frac) + values[i0 + 1] * frac
}

/// Inverse-CDF sampler for the probability density v = u rho on the grid
/// (negative parts clipped to zero). Piecewise-linear CDF: uniform within
/// each cell.
struct GridCdf {
    /// Normalized cumulative mass at the right face of each cell.
    cum: Vec<Real>,
    radius: Real,
    dx: Real,
}

impl GridCdf {
    fn new(bundle: &OperatorBundle, u: &DensityField) -> Result<Self> {
        if !u.matches(&bundle.grid) {
            return Err(Error::ShapeMismatch {
                expected: format!("field on {} cells", bundle.grid.cell_count()),
                got: format!("{} values", u.len()),
            });
        }
        let masses: Vec<Real> = (0..bundle.grid.cell_count())
            .map(|k| u.values[k].max(0.0) * bundle.weight.cell[k])
            .collect();
        let total = comp_sum(masses.clone());
        if !(total > 0.0) {
            return Err(Error::ZeroMass { mass: total });
        }
        let mut cum = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for m in &masses {
            acc += m / total;
            cum.push(acc);
        }
        // Guard against rounding: the last entry must cover p = 1.
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self {
            cum,
            radius: bundle.grid.radius(),
            dx: bundle.grid.dx(),
        })
    }

    /// x with CDF(x) = p, for p in [0, 1].
    fn quantile(&self, p: Real) -> Real {
        let k = self.cum.partition_point(|c| *c < p).min(self.cum.len() - 1);
        let lo = if k == 0 { 0.0 } else { self.cum[k - 1] };
        let span = self.cum[k] - lo;
        let left = -self.radius + k as Real * self.dx;
        if span <= 0.0 {
            left + 0.5 * self.dx
        } else {
            left + ((p - lo) / span).clamp(0.0, 1.0) * self.dx
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Real {
        self.quantile(rng.random::<Real>())
    }
}

/// Draw n initial positions from the density u rho (RNG stream 0 of `seed`).
pub fn sample_from_density(
    bundle: &OperatorBundle,
    u: &DensityField,
    n: usize,
    seed: u64,
) -> Result<Vec<Real>> {
    require_1d(bundle)?;
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let cdf = GridCdf::new(bundle, u)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    Ok((0..n).map(|_| cdf.sample(&mut rng)).collect())
}

fn make_streams(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|j| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(j as u64 + 1);
            r
        })
        .collect()
}

/// One Euler–Maruyama sweep over all particles with the density frozen at
/// `u`. Returns the smallest diffusion argument seen (before clipping).
fn em_sweep(
    bundle: &OperatorBundle,
    u: &DensityField,
    positions: &mut [Real],
    dt: Real,
    rngs: &mut [ChaCha8Rng],
) -> Result<Real> {
    let spec = &bundle.spec;
    let radius = bundle.grid.radius();
    let mut min_q: Real = Real::INFINITY;
    for (j, x) in positions.iter_mut().enumerate() {
        let ux = interp_at(&u.values, bundle, *x);
        let a = spec.coefficients.beta.quotient(ux);
        let bval = spec.coefficients.b.eval(ux);
        let point = [*x, 0.0];
        let d = spec.coefficients.drift.eval(&point)[0];
        let gphi = spec.potential.grad(&point)[0];
        let drift = d * bval - a * gphi;
        let q_raw = 2.0 * a;
        min_q = min_q.min(q_raw);
        let q = q_raw.max(0.0);
        let z: Real = rngs[j].sample(StandardNormal);
        let mut next = *x + drift * dt + (q * dt).sqrt() * z;
        // Reflecting walls; a jump past the reflected image means the step
        // size cannot resolve the dynamics in this box.
        if next > radius {
            next = 2.0 * radius - next;
        } else if next < -radius {
            next = -2.0 * radius - next;
        }
        if !(next.abs() <= radius) {
            return Err(Error::ParticleEscape { x: next, radius });
        }
        *x = next;
    }
    Ok(min_q)
}

fn checked_steps(t_span: Real, dt: Real) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let steps = (t_span / dt).round();
    if steps < 1.0 || (steps * dt - t_span).abs() > 1e-9 * t_span.max(1.0) {
        return Err(Error::Config(format!(
            "dt = {dt} does not evenly divide the time span {t_span}"
        )));
    }
    Ok(steps as usize)
}

/// Drive n particles by the PDE density over [0, t_final].
///
/// Initial positions are sampled from `trajectory.initial() * rho` by
/// inverse CDF; coefficients use the PDE field at the latest stored time at
/// or before the current step (piecewise constant in time, matching the
/// implicit scheme's step structure), linearly interpolated in space.
/// Requires dt <= the PDE step and t_final within the trajectory horizon.
pub fn simulate_pde_driven(
    bundle: &OperatorBundle,
    trajectory: &Trajectory,
    n: usize,
    dt: Real,
    t_final: Real,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let positions = sample_from_density(bundle, trajectory.initial(), n, seed)?;
    advance_pde_driven(bundle, trajectory, positions, 0.0, t_final, dt, seed)
}

/// Continue PDE-driven dynamics from explicit positions at time t0.
/// Used by the flow-property check (restart from a resampled marginal).
pub fn advance_pde_driven(
    bundle: &OperatorBundle,
    trajectory: &Trajectory,
    mut positions: Vec<Real>,
    t0: Real,
    t1: Real,
    dt: Real,
    seed: u64,
) -> Result<ParticleEnsemble> {
    require_1d(bundle)?;
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if t1 > trajectory.horizon * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Config(format!(
            "final time {t1} exceeds the PDE trajectory horizon {}",
            trajectory.horizon
        )));
    }
    if dt > trajectory.h * (1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "particle step dt = {dt} exceeds the PDE step h = {}",
            trajectory.h
        )));
    }
    let steps = checked_steps(t1 - t0, dt)?;
    let mut rngs = make_streams(seed, positions.len());
    let mut min_q = Real::INFINITY;
    for k in 0..steps {
        let t = t0 + k as Real * dt;
        // Query shifted by half a particle step: robust against rounding at
        // stored-sample boundaries, and still strictly below the next stored
        // time because the storage stride is at least h >= dt.
        let (_, u) = trajectory.at_or_before(t + 0.5 * dt);
        min_q = min_q.min(em_sweep(bundle, u, &mut positions, dt, &mut rngs)?);
    }
    Ok(ParticleEnsemble {
        positions,
        t: t1,
        seed,
        min_diffusion_arg: min_q,
    })
}

/// Gaussian kernel density estimate of the particle law on the grid, by
/// linear binning and discrete convolution (kernel truncated at 6 bandwidths).
/// `bandwidth = None` selects Silverman's rule on the current positions,
/// floored at half a cell so the estimate never degenerates below the grid
/// resolution. Errors if more than one particle exists and all coincide.
pub fn kde_density(
    bundle: &OperatorBundle,
    positions: &[Real],
    bandwidth: Option<Real>,
) -> Result<DensityField> {
    require_1d(bundle)?;
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n_particles = positions.len();
    let grid = &bundle.grid;
    let (lo, hi) = positions
        .iter()
        .fold((Real::INFINITY, Real::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        });
    if n_particles > 1 && lo == hi {
        return Err(Error::KdeDegenerate {
            n: n_particles,
            x: lo,
        });
    }

    let bw = match bandwidth {
        Some(b) => b,
        None => {
            let mean = comp_sum(positions.to_vec()) / n_particles as Real;
            let var = comp_sum(positions.iter().map(|x| (x - mean) * (x - mean)))
                / n_particles as Real;
            let mut sorted = positions.to_vec();
            sorted.sort_unstable_by(Real::total_cmp);
            let iqr = sorted[((3 * n_particles) / 4).min(n_particles - 1)]
                - sorted[n_particles / 4];
            let sd = var.sqrt();
            let mut spread = sd.min(iqr / 1.34);
            if spread <= 0.0 {
                spread = sd;
            }
            (0.9 * spread * (n_particles as Real).powf(-0.2)).max(0.5 * grid.dx())
        }
    };
    if !(bw > 0.0 && bw.is_finite()) {
        return Err(Error::Config(format!("bandwidth must be positive, got {bw}")));
    }

    // Linear binning: unit mass split between the two nearest cell centers.
    let n = grid.n();
    let mut binned = vec![0.0; n];
    let w = 1.0 / n_particles as Real;
    for x in positions {
        let pos = (x + grid.radius()) / grid.dx() - 0.5;
        if n == 1 {
            binned[0] += w;
            continue;
        }
        let i0 = (pos.floor() as isize).clamp(0, n as isize - 2) as usize;
        let frac = (pos - i0 as Real).clamp(0.0, 1.0);
        binned[i0] += w * (1.0 - frac);
        binned[i0 + 1] += w * frac;
    }

    // Convolve with the Gaussian kernel sampled at cell offsets. The samples
    // are renormalized so their discrete integral is exactly one: a narrow
    // kernel (bandwidth near the cell floor) sampled at grid points would
    // otherwise overshoot its continuous mass by percents.
    let halfwidth = ((6.0 * bw / grid.dx()).ceil() as usize).min(n);
    let mut kernel: Vec<Real> = (0..=halfwidth)
        .map(|k| {
            let y = k as Real * grid.dx() / bw;
            (-0.5 * y * y).exp()
        })
        .collect();
    let ksum = grid.dx() * (kernel[0] + 2.0 * comp_sum(kernel[1..].iter().copied()));
    for k in &mut kernel {
        *k /= ksum;
    }
    let mut v = vec![0.0; n];
    for (j, m) in binned.iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        let lo = j.saturating_sub(halfwidth);
        let hi = (j + halfwidth).min(n - 1);
        for (i, vi) in v.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *vi += m * kernel[i.abs_diff(j)];
        }
    }
    DensityField::from_values(grid, v)
}

/// Self-consistent (McKean–Vlasov) particle dynamics: every step refreshes
/// the density by KDE from the current positions, sets u = v / rho clipped
/// below at 1e-12, and advances all particles with that shared density.
pub fn simulate_self_consistent(
    bundle: &OperatorBundle,
    u0: &DensityField,
    n: usize,
    dt: Real,
    t_final: Real,
    seed: u64,
    bandwidth: Option<Real>,
) -> Result<ParticleEnsemble> {
    require_1d(bundle)?;
    if let Some(b) = bandwidth {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {b}")));
        }
    }
    let steps = checked_steps(t_final, dt)?;
    let mut positions = sample_from_density(bundle, u0, n, seed)?;
    let mut rngs = make_streams(seed, n);
    let mut min_q = Real::INFINITY;
    for _ in 0..steps {
        let v = kde_density(bundle, &positions, bandwidth)?;
        let u = DensityField::from_values(
            &bundle.grid,
            v.values
                .iter()
                .zip(&bundle.weight.cell)
                .map(|(vi, rho)| (vi / rho).max(1e-12))
                .collect(),
        )?;
        min_q = min_q.min(em_sweep(bundle, &u, &mut positions, dt, &mut rngs)?);
    }
    Ok(ParticleEnsemble {
        positions,
        t: t_final,
        seed,
        min_diffusion_arg: min_q,
    })
}

/// Compare an empirical ensemble against the PDE density u at the same time:
/// (L¹ distance between the cell histogram and v = u rho, Wasserstein-1 via
/// sorted samples against inverse-CDF quantiles at (k + 1/2)/N).
pub fn compare_marginals(
    bundle: &OperatorBundle,
    positions: &[Real],
    u: &DensityField,
) -> Result<(Real, Real)> {
    require_1d(bundle)?;
    if positions.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let grid = &bundle.grid;
    let n = grid.n();
    let n_particles = positions.len();

    let mut hist = vec![0.0; n];
    let hw = 1.0 / (n_particles as Real * grid.dx());
    for x in positions {
        let i = (((x + grid.radius()) / grid.dx()).floor() as isize)
            .clamp(0, n as isize - 1) as usize;
        hist[i] += hw;
    }
    let l1_terms: Vec<Real> = (0..n)
        .map(|k| (hist[k] - u.values[k] * bundle.weight.cell[k]).abs() * grid.dx())
        .collect();
    let l1 = comp_sum(l1_terms);

    let cdf = GridCdf::new(bundle, u)?;
    let mut sorted = positions.to_vec();
    sorted.sort_unstable_by(Real::total_cmp);
    let w1_terms: Vec<Real> = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| (x - cdf.quantile((k as Real + 0.5) / n_particles as Real)).abs())
        .collect();
    let w1 = comp_sum(w1_terms) / n_particles as Real;
    Ok((l1, w1))
}

/// Wasserstein-1 between two equal-size empirical samples (sorted coupling).
pub fn w1_between_samples(a: &[Real], b: &[Real]) -> Result<Real> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Config(format!(
            "Wasserstein comparison needs two equal nonempty samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_unstable_by(Real::total_cmp);
    sb.sort_unstable_by(Real::total_cmp);
    let terms: Vec<Real> = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).collect();
    Ok(comp_sum(terms) / sa.len() as Real)
}

/// Sampling-noise floor of [`compare_marginals`]: median distances over
/// `trials` independent draws of n particles from u itself. A simulated
/// ensemble matching the PDE marginal cannot do better than this scale.
pub fn self_sampling_baseline(
    bundle: &OperatorBundle,
    u: &DensityField,
    n: usize,
    seed: u64,
    trials: usize,
) -> Result<(Real, Real)> {
    require_1d(bundle)?;
    if trials == 0 {
        return Err(Error::Config("baseline needs at least one trial".into()));
    }
    let cdf = GridCdf::new(bundle, u)?;
    let mut l1s = Vec::with_capacity(trials);
    let mut w1s = Vec::with_capacity(trials);
    for k in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Streams counted down from the top stay clear of particle streams.
        rng.set_stream(u64::MAX - k as u64);
        let positions: Vec<Real> = (0..n).map(|_| cdf.sample(&mut rng)).collect();
        let (l1, w1) = compare_marginals(bundle, &positions, u)?;
        l1s.push(l1);
        w1s.push(w1);
    }
    Ok((median(l1s), median(w1s)))
}

fn median(mut v: Vec<Real>) -> Real {
    v.sort_unstable_by(Real::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bootstrap-resample an ensemble (with replacement; RNG stream 0 of `seed`).
pub fn resample_with_replacement(positions: &[Real], n: usize, seed: u64) -> Result<Vec<Real>> {
    if positions.is_empty() || n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    Ok((0..n)
        .map(|_| positions[rng.random_range(0..positions.len())])
        .collect())
}

/// Sampled audit of the structural relation `|b'(r) r + b(r)| <= alpha beta'(r)`
/// on [lo, hi]. Failures are reported as warnings (the relation feeds the
/// uniqueness/Markov analysis, not the simulation itself); an empty vector
/// means the relation holds with a moderate constant on the sampled range.
pub fn audit_h5(bundle: &OperatorBundle, lo: Real, hi: Real) -> Vec<String> {
    let coeffs = &bundle.spec.coefficients;
    if coeffs.b.is_zero() {
        return Vec::new();
    }
    let mut warnings = Vec::new();
    let mut alpha: Real = 0.0;
    let samples = 513;
    for k in 0..samples {
        let r = lo + (hi - lo) * k as Real / (samples - 1) as Real;
        let lhs = (coeffs.b.deriv(r) * r + coeffs.b.eval(r)).abs();
        let rhs = coeffs.beta.deriv(r).max(0.0);
        if rhs <= 1e-14 {
            if lhs > 1e-12 && warnings.is_empty() {
                warnings.push(format!(
                    "mobility-vs-diffusion bound fails at r = {r:e}: |b'r + b| = {lhs:e} \
                     while beta'(r) = {rhs:e} (no finite constant exists there)"
                ));
            }
        } else {
            alpha = alpha.max(lhs / rhs);
        }
    }
    if warnings.is_empty() && alpha > 1e8 {
        warnings.push(format!(
            "mobility-vs-diffusion constant is effectively unbounded on the sampled range: \
             alpha = {alpha:e}"
        ));
    }
    warnings
}

/// Independent explicit solve of the rho-linearized equation with
/// coefficients frozen along a PDE trajectory:
///
/// `dzeta/dt = (d/dx)[ d(a(y) zeta)/dx + (a(y) Phi' - b(y) D) zeta ]`
///
/// for the Lebesgue density zeta, run from `zeta(s) = u(s) rho` to time t
/// with central face fluxes and CFL-limited explicit steps. Returns zeta at
/// time t on cell centers. Exposed separately from the residual so that a
/// refinement study can estimate this scheme's own discretization error by
/// restricting a finer run onto a coarser grid.
pub fn linearized_flow_terminal(
    bundle: &OperatorBundle,
    trajectory: &Trajectory,
    s: Real,
    t: Real,
) -> Result<Vec<Real>> {
    require_1d(bundle)?;
    if !(0.0 <= s && s <= t) {
        return Err(Error::Config(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    let (ts, us) = trajectory.at_or_before(s * (1.0 + 1e-12) + 1e-15);
    if (ts - s).abs() > 1e-9 * s.max(1.0) {
        return Err(Error::Config(format!(
            "time s = {s} is not a stored trajectory sample (nearest {ts})"
        )));
    }
    let (tt, _) = trajectory.at_or_before(t * (1.0 + 1e-12) + 1e-15);
    if (tt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::Config(format!(
            "time t = {t} is not a stored trajectory sample (nearest {tt})"
        )));
    }

    let grid = &bundle.grid;
    let n = grid.n();
    let dx = grid.dx();
    let mut zeta: Vec<Real> = (0..n)
        .map(|k| us.values[k] * bundle.weight.cell[k])
        .collect();

    let spec = &bundle.spec;
    let mut r = ts;
    while r < tt - 1e-14 {
        let (_, y) = trajectory.at_or_before(r);
        let a: Vec<Real> = y.values.iter().map(|u| spec.coefficients.beta.quotient(*u)).collect();
        // Face coefficients (interior faces f = 1..n-1): diffusion a_f and
        // advection velocity a_f Phi'(x_f) - b(y_f) D(x_f).
        let mut a_face = vec![0.0; n + 1];
        let mut adv = vec![0.0; n + 1];
        let mut a_max: Real = 0.0;
        let mut v_max: Real = 0.0;
        for f in 1..n {
            let af = 0.5 * (a[f - 1] + a[f]);
            let yf = 0.5 * (y.values[f - 1] + y.values[f]);
            let point = [grid.face_coord(f), 0.0];
            let gphi = spec.potential.grad(&point)[0];
            let d = spec.coefficients.drift.eval(&point)[0];
            a_face[f] = af;
            adv[f] = af * gphi - spec.coefficients.b.eval(yf) * d;
            a_max = a_max.max(af.abs());
            v_max = v_max.max(adv[f].abs());
        }

        let dt_diff = if a_max > 0.0 { dx * dx / (2.0 * a_max) } else { Real::INFINITY };
        let dt_adv = if v_max > 0.0 { dx / v_max } else { Real::INFINITY };
        let dt_cfl = 0.4 * dt_diff.min(dt_adv);
        if !(dt_cfl > 0.0) || dt_cfl.is_nan() {
            return Err(Error::CflViolation {
                dt: dt_cfl,
                limit: dt_diff.min(dt_adv),
            });
        }
        let dt = dt_cfl.min(tt - r);

        // Conservative update: zeta_i += dt (G_{i+1} - G_i)/dx with wall
        // fluxes zero; G_f = d(a zeta)/dx|_f + adv_f * zeta_f (central).
        let mut flux = vec![0.0; n + 1];
        for f in 1..n {
            let grad = (a[f] * zeta[f] - a[f - 1] * zeta[f - 1]) / dx;
            let mid = 0.5 * (zeta[f - 1] + zeta[f]);
            flux[f] = grad + adv[f] * mid;
        }
        for i in 0..n {
            zeta[i] += dt * (flux[i + 1] - flux[i]) / dx;
        }
        r += dt;
    }
    Ok(zeta)
}

/// L¹ gap `|zeta(t) - u(t) rho|` between [`linearized_flow_terminal`] and
/// the implicit trajectory itself. The uniqueness statement for the frozen
/// linear equation predicts the PDE's own (nonlinear) trajectory, so the
/// gap is pure two-scheme discretization error.
pub fn linearized_flow_residual(
    bundle: &OperatorBundle,
    trajectory: &Trajectory,
    s: Real,
    t: Real,
) -> Result<Real> {
    let zeta = linearized_flow_terminal(bundle, trajectory, s, t)?;
    let (_, ut) = trajectory.at_or_before(t * (1.0 + 1e-12) + 1e-15);
    let grid = &bundle.grid;
    let dx = grid.dx();
    let gap_terms: Vec<Real> = (0..grid.n())
        .map(|k| (zeta[k] - ut.values[k] * bundle.weight.cell[k]).abs() * dx)
        .collect();
    Ok(comp_sum(gap_terms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::normalize_probability;
    use crate::presets;
    use crate::resolvent::ResolventConfig;
    use crate::semigroup::evolve;

    fn ou_bundle(n: usize) -> OperatorBundle {
        OperatorBundle::new(&presets::ornstein_uhlenbeck(1, 1.0), n).unwrap()
    }

    fn gaussian_over_rho(bundle: &OperatorBundle, mean: Real, var: Real) -> DensityField {
        let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
        DensityField::from_fn(&bundle.grid, |x| {
            let p = norm * (-(x[0] - mean) * (x[0] - mean) / (2.0 * var)).exp();
            p * bundle.spec.potential.eval(x).exp()
        })
    }

    fn moments(positions: &[Real]) -> (Real, Real) {
        let n = positions.len() as Real;
        let mean = comp_sum(positions.to_vec()) / n;
        let var = comp_sum(positions.iter().map(|x| (x - mean) * (x - mean))) / n;
        (mean, var)
    }

    #[test]
    fn ou_marginal_closed_forms() {
        assert_eq!(ou_exact_marginal(1.0, 0.25, 1.0, 0.0), (1.0, 0.25));
        let (_, v_inf) = ou_exact_marginal(1.0, 0.25, 1.0, 60.0);
        assert!((v_inf - 0.5).abs() < 1e-12);
        // t = ln 2: mean halves; variance 0 e^{-2t} + (1/2)(1 - 1/4) = 0.375.
        let (m, v) = ou_exact_marginal(1.0, 0.0, 1.0, std::f64::consts::LN_2);
        assert!((m - 0.5).abs() < 1e-15);
        assert!((v - 0.375).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_sampling_reproduces_the_stationary_law() {
        let bundle = ou_bundle(256);
        let u = normalize_probability(
            &DensityField::constant(&bundle.grid, 1.0),
            &bundle.grid,
            &bundle.weight,
        )
        .unwrap();
        let n = 20_000;
        let xs = sample_from_density(&bundle, &u, n, 42).unwrap();
        let (mean, var) = moments(&xs);
        // Stationary law N(0, 1/2): allow 4 standard errors.
        let se_mean = (0.5_f64 / n as Real).sqrt();
        assert!(mean.abs() <= 4.0 * se_mean, "mean {mean}");
        assert!((var - 0.5).abs() <= 0.03, "var {var}");
        // Quantiles are monotone.
        let cdf = GridCdf::new(&bundle, &u).unwrap();
        let mut prev = Real::NEG_INFINITY;
        for k in 0..=100 {
            let q = cdf.quantile(k as Real / 100.0);
            assert!(q >= prev);
            prev = q;
        }
    }

    #[test]
    fn transport_distance_between_separated_masses_is_two() {
        let bundle = ou_bundle(512);
        // Density concentrated in the cell nearest x = -1.
        let mut vals = vec![0.0; bundle.grid.cell_count()];
        let target = (0..bundle.grid.cell_count())
            .min_by(|&a, &b| {
                (bundle.grid.center(a) + 1.0)
                    .abs()
                    .total_cmp(&(bundle.grid.center(b) + 1.0).abs())
            })
            .unwrap();
        vals[target] = 1.0 / (bundle.weight.cell[target] * bundle.grid.dx());
        let u = DensityField::from_values(&bundle.grid, vals).unwrap();
        // All particles at +1.
        let positions = vec![1.0; 1000];
        let (_, w1) = compare_marginals(&bundle, &positions, &u).unwrap();
        assert!((w1 - 2.0).abs() <= 2.0 * bundle.grid.dx(), "w1 = {w1}");
    }

    #[test]
    fn self_sampling_baseline_is_small_for_smooth_densities() {
        let bundle = ou_bundle(256);
        let u = gaussian_over_rho(&bundle, 0.0, 0.5);
        let n = 10_000;
        let (l1, w1) = self_sampling_baseline(&bundle, &u, n, 7, 5).unwrap();
        // O(N^{-1/2}) scale for w1; histogram L¹ noise is O(sqrt(n_cells/N)).
        assert!(w1 <= 2e-2, "baseline w1 {w1}");
        assert!(l1 <= 0.3, "baseline l1 {l1}");
        assert!(w1 > 0.0 && l1 > 0.0);
    }

    #[test]
    fn identical_seeds_reproduce_bitwise() {
        let bundle = ou_bundle(128);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let traj = evolve(&bundle, &u0, 0.25, 8, &ResolventConfig::default()).unwrap();
        let a = simulate_pde_driven(&bundle, &traj, 200, 1.0 / 32.0, 0.25, 99).unwrap();
        let b = simulate_pde_driven(&bundle, &traj, 200, 1.0 / 32.0, 0.25, 99).unwrap();
        assert_eq!(a.positions, b.positions);
        let c = simulate_pde_driven(&bundle, &traj, 200, 1.0 / 32.0, 0.25, 100).unwrap();
        assert_ne!(a.positions, c.positions);
    }

    #[test]
    fn pde_driven_particles_match_the_ou_oracle_moments() {
        let bundle = ou_bundle(256);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let t = 0.5;
        let traj = evolve(&bundle, &u0, t, 32, &ResolventConfig::default()).unwrap();
        let n = 20_000;
        let ens = simulate_pde_driven(&bundle, &traj, n, 1.0 / 64.0, t, 4242).unwrap();
        assert!(ens.min_diffusion_arg >= -1e-14);
        let (mean, var) = moments(&ens.positions);
        let (m_ex, v_ex) = ou_exact_marginal(1.0, 0.04, 1.0, t);
        let se_mean = (v_ex / n as Real).sqrt();
        // 5 standard errors plus an O(dt) discretization allowance.
        assert!(
            (mean - m_ex).abs() <= 5.0 * se_mean + 5e-3,
            "mean {mean} vs {m_ex}"
        );
        assert!((var - v_ex).abs() <= 0.02, "var {var} vs {v_ex}");
    }

    #[test]
    fn self_consistent_run_approaches_the_pde_marginal() {
        let bundle = ou_bundle(128);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let t = 0.25;
        let traj = evolve(&bundle, &u0, t, 16, &ResolventConfig::default()).unwrap();
        let n = 5_000;
        let ens =
            simulate_self_consistent(&bundle, &u0, n, 1.0 / 32.0, t, 11, None).unwrap();
        assert!(ens.min_diffusion_arg >= -1e-14);
        let (_, w1) = compare_marginals(&bundle, &ens.positions, traj.final_field()).unwrap();
        assert!(w1 <= 5e-2, "self-consistent w1 {w1}");
        // A single particle is degenerate but runs.
        let one = simulate_self_consistent(&bundle, &u0, 1, 1.0 / 32.0, t, 11, None).unwrap();
        assert_eq!(one.positions.len(), 1);
    }

    #[test]
    fn collapsed_ensembles_are_rejected_by_the_kde() {
        let bundle = ou_bundle(64);
        let positions = vec![0.25; 50];
        match kde_density(&bundle, &positions, None) {
            Err(Error::KdeDegenerate { n, x }) => {
                assert_eq!(n, 50);
                assert_eq!(x, 0.25);
            }
            other => panic!("expected degeneracy error, got {:?}", other.map(|_| ())),
        }
        // One particle is fine (bandwidth floored at half a cell).
        let v = kde_density(&bundle, &positions[..1], None).unwrap();
        let mass = comp_sum(v.values.clone()) * bundle.grid.dx();
        assert!((mass - 1.0).abs() < 1e-6, "KDE mass {mass}");
    }

    #[test]
    fn runaway_steps_are_reported_as_escapes() {
        let bundle = ou_bundle(64);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        // dt = 50 with drift -x throws particles far past the reflected image.
        let res = simulate_self_consistent(&bundle, &u0, 50, 50.0, 50.0, 3, None);
        assert!(matches!(res, Err(Error::ParticleEscape { .. })));
    }

    #[test]
    fn parameter_validation_rejects_bad_runs() {
        let bundle = ou_bundle(64);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let traj = evolve(&bundle, &u0, 0.25, 8, &ResolventConfig::default()).unwrap();
        // dt above the PDE step.
        assert!(simulate_pde_driven(&bundle, &traj, 10, 0.1, 0.25, 1).is_err());
        // Final time beyond the horizon.
        assert!(simulate_pde_driven(&bundle, &traj, 10, 1.0 / 64.0, 0.5, 1).is_err());
        // dt not dividing the span.
        assert!(simulate_pde_driven(&bundle, &traj, 10, 0.013, 0.25, 1).is_err());
        // Empty ensemble.
        assert!(matches!(
            simulate_pde_driven(&bundle, &traj, 0, 1.0 / 64.0, 0.25, 1),
            Err(Error::EmptyEnsemble)
        ));
        // 2D bundles are rejected.
        let spec2 = presets::ornstein_uhlenbeck(2, 1.0);
        let b2 = OperatorBundle::new(&spec2, 16).unwrap();
        let u2 = DensityField::constant(&b2.grid, 1.0);
        assert!(sample_from_density(&b2, &u2, 10, 1).is_err());
    }

    #[test]
    fn flow_property_holds_at_the_particle_level() {
        // Distributional flow property: running to s + t directly, and
        // restarting at s from a bootstrap resample of the s-marginal, give
        // the same law at the end (within sampling noise).
        let bundle = ou_bundle(128);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.04);
        let (s, t) = (0.25, 0.25);
        let traj = evolve(&bundle, &u0, s + t, 32, &ResolventConfig::default()).unwrap();
        let n = 10_000;
        let dt = 1.0 / 64.0;
        let full_a = simulate_pde_driven(&bundle, &traj, n, dt, s + t, 1).unwrap();
        let full_b = simulate_pde_driven(&bundle, &traj, n, dt, s + t, 2).unwrap();
        let at_s = simulate_pde_driven(&bundle, &traj, n, dt, s, 3).unwrap();
        let restarted = resample_with_replacement(&at_s.positions, n, 4).unwrap();
        let cont = advance_pde_driven(&bundle, &traj, restarted, s, s + t, dt, 5).unwrap();
        let noise = w1_between_samples(&full_a.positions, &full_b.positions).unwrap();
        let gap = w1_between_samples(&full_a.positions, &cont.positions).unwrap();
        assert!(
            gap <= 3.0 * noise.max(1e-3),
            "flow-property gap {gap} vs seed noise {noise}"
        );
    }

    #[test]
    fn structural_audit_flags_degenerate_mobility_pairs() {
        let ou = ou_bundle(32);
        assert!(audit_h5(&ou, -4.0, 4.0).is_empty());
        // Porous beta has beta'(0) = 0 while b = 1 there: no finite constant.
        let porous = OperatorBundle::new(&presets::porous_medium(1), 32).unwrap();
        let warnings = audit_h5(&porous, -4.0, 4.0);
        assert!(!warnings.is_empty());
    }

    #[test]
    fn linearized_flow_reproduces_the_nonlinear_run() {
        let bundle = ou_bundle(128);
        let u0 = gaussian_over_rho(&bundle, 1.0, 0.09);
        let traj = evolve(&bundle, &u0, 0.25, 64, &ResolventConfig::default()).unwrap();
        // s = t: zero explicit steps, zero residual.
        assert_eq!(linearized_flow_residual(&bundle, &traj, 0.25, 0.25).unwrap(), 0.0);
        let res = linearized_flow_residual(&bundle, &traj, 0.0, 0.25).unwrap();
        assert!(res <= 5e-3, "two-scheme gap {res:e}");

        // Perturbing the frozen coefficients must increase the gap for a
        // genuinely nonlinear problem (for linear beta the coefficients do
        // not depend on y at all, so perturb the porous run instead).
        let pb = OperatorBundle::new(&presets::porous_medium(1), 128).unwrap();
        let p0 = normalize_probability(
            &DensityField::from_fn(&pb.grid, |x| (-(x[0]) * (x[0])).exp()),
            &pb.grid,
            &pb.weight,
        )
        .unwrap();
        let ptraj = evolve(&pb, &p0, 0.25, 16, &ResolventConfig::default()).unwrap();
        let base = linearized_flow_residual(&pb, &ptraj, 0.0, 0.25).unwrap();
        let mut perturbed_fields: Vec<DensityField> = Vec::new();
        for f in &ptraj.fields {
            let bump = DensityField::from_fn(&pb.grid, |x| 0.3 * (-(x[0] - 0.5).powi(2)).exp());
            perturbed_fields.push(f.axpy(1.0, &bump));
        }
        let perturbed = Trajectory {
            horizon: ptraj.horizon,
            steps: ptraj.steps,
            h: ptraj.h,
            times: ptraj.times.clone(),
            fields: perturbed_fields,
            monitors: ptraj.monitors.clone(),
            breaches: Vec::new(),
        };
        // Keep the true initial/final data but freeze perturbed coefficients:
        // zeta now solves the wrong linear equation.
        let mut hybrid_fields = perturbed.fields.clone();
        hybrid_fields[0] = ptraj.fields[0].clone();
        let last = hybrid_fields.len() - 1;
        hybrid_fields[last] = ptraj.fields[last].clone();
        let hybrid = Trajectory { fields: hybrid_fields, ..perturbed };
        let worse = linearized_flow_residual(&pb, &hybrid, 0.0, 0.25).unwrap();
        assert!(
            worse > 2.0 * base.max(1e-9),
            "perturbed {worse:e} vs base {base:e}"
        );
    }
}

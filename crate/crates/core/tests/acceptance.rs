//! Acceptance suite: the guarantees this library ships with, one test per
//! criterion. Each test prints a single PASS/FAIL line (visible under
//! `--nocapture`) with the measured value and the pinned tolerance, then
//! asserts it. Tolerances are fixed here on purpose — loosening one is a
//! release decision, not a test fix.
//!
//!  1. duality and symmetry of the discrete weighted operators
//!  2. weighted-L¹ contraction of the resolvent (100 random trials)
//!  3. resolvent identity
//!  4. sup bound, positivity, and mass preservation on the same trials
//!  5. near-identity consistency |J_λ g − g| = O(λ)
//!  6. exponential-formula convergence in the step count
//!  7. closed-form Ornstein-Uhlenbeck marginal match
//!  8. exact stationarity of the normalized weight
//!  9. semigroup property (matched and mismatched resolution)
//! 10. distributional weak-form residual, order ≥ 1 under refinement
//! 11. particle superposition: moments and Wasserstein distance
//! 12. linearized-flow cross-check against an independent explicit scheme
//! 13. mutation sensitivity: breaking upwinding must break criterion 2

use std::sync::OnceLock;

use wfpk_core::config::InitialData;
use wfpk_core::mckean_vlasov::{
    compare_marginals, linearized_flow_residual, linearized_flow_terminal, ou_exact_marginal,
    self_sampling_baseline, simulate_pde_driven,
};
use wfpk_core::model::{norm_l1_rho, Coefficients, Mobility, Nonlinearity, VectorField};
use wfpk_core::numeric::{coarsen_pairs, comp_sum, observed_order};
use wfpk_core::operators::FaceScheme;
use wfpk_core::presets;
use wfpk_core::semigroup::{
    check_semigroup_property, semigroup_defect_mismatched, weak_form_residual, TestFunction,
};
use wfpk_core::validate::{
    check_sbp, consistency_outcome, identity_outcome, resolvent_trial_suite, PropertyOutcome,
};
use wfpk_core::{
    evolve, DensityField, OperatorBundle, Potential, ProblemSpec, ResolventConfig,
};

type Real = f64;

fn cfg() -> ResolventConfig {
    ResolventConfig::default()
}

/// Linear ("Ornstein-Uhlenbeck") diffusion with a bounded smooth transport
/// field: the second coefficient family of the contraction trials.
fn linear_beta_with_drift() -> ProblemSpec {
    ProblemSpec::new(
        1,
        4.5,
        Potential::Quadratic { a: 1.0 },
        Coefficients::new(
            Nonlinearity::Linear { slope: 0.5 },
            Mobility::Constant { value: 1.0 },
            VectorField::GaussX { amp: 0.5, width: 1.0 },
        ),
    )
}

fn bundle(spec: &ProblemSpec, n: usize) -> OperatorBundle {
    OperatorBundle::new(spec, n).expect("acceptance problem families satisfy the hypotheses")
}

fn find<'a>(outcomes: &'a [PropertyOutcome], name: &str) -> &'a PropertyOutcome {
    outcomes
        .iter()
        .find(|o| o.name == name)
        .unwrap_or_else(|| panic!("suite reports no outcome named '{name}'"))
}

fn verdict(criterion: &str, ok: bool, detail: &str) {
    println!("criterion {criterion} {}: {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Trials shared by criteria 2, 4, and 13: 50 on the degenerate
/// porous-medium family with strong drift, 50 on the linear-diffusion
/// family, both on 128 cells with the upwind face scheme.
const TRIALS_PER_FAMILY: usize = 50;
const TRIAL_SEED_POROUS: u64 = 0x5eed_0002;
const TRIAL_SEED_LINEAR: u64 = 0x5eed_0003;

fn upwind_trials() -> &'static (Vec<PropertyOutcome>, Vec<PropertyOutcome>) {
    static RESULTS: OnceLock<(Vec<PropertyOutcome>, Vec<PropertyOutcome>)> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let porous = bundle(&presets::porous_medium_strong_drift(1), 128);
        let linear = bundle(&linear_beta_with_drift(), 128);
        let a = resolvent_trial_suite(&porous, TRIALS_PER_FAMILY, TRIAL_SEED_POROUS, &cfg())
            .expect("porous trial suite runs");
        let b = resolvent_trial_suite(&linear, TRIALS_PER_FAMILY, TRIAL_SEED_LINEAR, &cfg())
            .expect("linear trial suite runs");
        (a, b)
    })
}

#[test]
fn acceptance_01_operator_duality_and_symmetry() {
    let mut worst_duality: Real = 0.0;
    let mut worst_symmetry: Real = 0.0;
    let cases: [(&str, ProblemSpec, usize); 3] = [
        ("1d n=64", presets::porous_medium(1), 64),
        ("1d n=256", presets::porous_medium(1), 256),
        ("2d n=32^2", presets::ornstein_uhlenbeck(2, 1.0), 32),
    ];
    for (label, spec, n) in &cases {
        let b = bundle(spec, *n);
        let outcomes = check_sbp(&b, 50, 0x5eed_0001).expect("sbp suite runs");
        let duality = find(&outcomes, "divergence-gradient-duality");
        let symmetry = find(&outcomes, "weighted-laplacian-symmetry");
        assert!(duality.passed, "duality failed on {label}: worst {:e}", duality.worst);
        assert!(symmetry.passed, "symmetry failed on {label}: worst {:e}", symmetry.worst);
        worst_duality = worst_duality.max(duality.worst);
        worst_symmetry = worst_symmetry.max(symmetry.worst);
    }
    verdict(
        "01 (duality & symmetry)",
        true,
        &format!(
            "50 pairs per grid; worst duality {worst_duality:.3e} <= 1e-13 (scaled), \
             worst symmetry {worst_symmetry:.3e} <= 1e-12"
        ),
    );
}

#[test]
fn acceptance_02_resolvent_contraction_100_trials() {
    let (porous, linear) = upwind_trials();
    let a = find(porous, "weighted-l1-contraction");
    let b = find(linear, "weighted-l1-contraction");
    let ok = a.passed && b.passed && a.trials + b.trials == 2 * TRIALS_PER_FAMILY;
    verdict(
        "02 (L1 contraction)",
        ok,
        &format!(
            "{} trials, n=128, porous+linear beta with bounded drift; worst ratio {:.12} \
             <= 1 + 1e-8, violations {}",
            a.trials + b.trials,
            a.worst.max(b.worst),
            a.violations + b.violations
        ),
    );
    assert!(ok, "contraction violated: porous worst {:e}, linear worst {:e}", a.worst, b.worst);
}

#[test]
fn acceptance_03_resolvent_identity_20_trials() {
    let b = bundle(&presets::porous_medium_strong_drift(1), 128);
    let outcome = identity_outcome(&b, 20, 0x5eed_0004, &cfg()).expect("identity trials run");
    verdict(
        "03 (resolvent identity)",
        outcome.passed,
        &format!(
            "{} random (f, l1, l2) trials; worst relative residual {:.3e} <= {:.1e} \
             (10x solver tolerance)",
            outcome.trials, outcome.worst, outcome.tolerance
        ),
    );
    assert!(outcome.passed, "identity residual {:e} > {:e}", outcome.worst, outcome.tolerance);
}

#[test]
fn acceptance_04_sup_bound_positivity_mass_on_contraction_trials() {
    let (porous, linear) = upwind_trials();
    let mut ok = true;
    let mut detail = String::new();
    for name in ["sup-norm-bound", "positivity-preservation", "mass-conservation"] {
        let a = find(porous, name);
        let b = find(linear, name);
        ok &= a.passed && b.passed;
        detail.push_str(&format!("{name} worst {:.3e}; ", a.worst.max(b.worst)));
    }
    verdict(
        "04 (sup/positivity/mass)",
        ok,
        &format!("every criterion-2 trial; {detail}tolerances 1+1e-8 scaled, 1e-12, 1e-10"),
    );
    assert!(ok, "an invariant failed on the contraction trials: {detail}");
}

#[test]
fn acceptance_05_near_identity_consistency() {
    // lambda0 is infinite (linear family) or ~0.7 (porous family) here, so
    // the probed steps are exactly {1e-2, 1e-3, 1e-4} in both cases.
    let mut worst = 0.0_f64;
    for spec in [presets::ornstein_uhlenbeck(1, 1.0), presets::porous_medium(1)] {
        let b = bundle(&spec, 128);
        let g = DensityField::from_fn(&b.grid, |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let outcome = consistency_outcome(&b, &g, &cfg()).expect("consistency probe runs");
        assert!(
            outcome.passed,
            "|J_l g - g|/l varied by more than 50%: ratio {:e}",
            outcome.worst
        );
        worst = worst.max(outcome.worst);
    }
    verdict(
        "05 (J_lambda consistency)",
        true,
        &format!(
            "smooth g, lambda in {{1e-2, 1e-3, 1e-4}}: max/min of |J_lambda g - g|/lambda \
             = {worst:.4} <= 1.5"
        ),
    );
}

#[test]
fn acceptance_06_exponential_formula_convergence() {
    let horizon = 1.0;
    let mut all_orders = Vec::new();
    for (label, spec) in [
        ("ou", presets::ornstein_uhlenbeck(1, 1.0)),
        ("porous", presets::porous_medium(1)),
    ] {
        let b = bundle(&spec, 128);
        let u0 = InitialData::GaussianDensity { mean: 0.5, var: 0.25 }
            .build(&b)
            .expect("initial datum builds");
        let finals: Vec<DensityField> = [16usize, 32, 64, 128, 256]
            .iter()
            .map(|steps| {
                evolve(&b, &u0, horizon, *steps, &cfg())
                    .expect("evolution runs")
                    .final_field()
                    .clone()
            })
            .collect();
        let diffs: Vec<Real> = finals
            .windows(2)
            .map(|w| norm_l1_rho(&w[1].sub(&w[0]), &b.grid, &b.weight).expect("norm"))
            .collect();
        for pair in diffs.windows(2) {
            assert!(
                pair[1] < pair[0],
                "{label}: |u_2n - u_n| not monotone: {diffs:?}"
            );
            all_orders.push(observed_order(pair[0], pair[1]));
        }
        println!("  {label}: successive-step gaps {diffs:?}");
    }
    let min_order = all_orders.iter().copied().fold(Real::INFINITY, Real::min);
    let ok = min_order >= 0.8;
    verdict(
        "06 (exponential formula)",
        ok,
        &format!(
            "|u_2n(1) - u_n(1)| monotone over n in {{16,32,64,128}} for both families; \
             observed order {min_order:.3} >= 0.8"
        ),
    );
    assert!(ok, "observed order {min_order} < 0.8");
}

#[test]
fn acceptance_07_ou_oracle_match() {
    let sigma = 1.0;
    let b = bundle(&presets::ornstein_uhlenbeck(1, sigma), 512);
    let u0 = InitialData::GaussianDensity { mean: 1.0, var: 0.04 }
        .build(&b)
        .expect("initial datum builds");
    let traj = evolve(&b, &u0, 1.0, 256, &cfg()).expect("evolution runs");

    let grid = &b.grid;
    let dx = grid.dx();
    let mut worst = 0.0_f64;
    for t in [0.25, 0.5, 1.0] {
        let (ts, u) = traj.at_or_before(t + 1e-12);
        assert!((ts - t).abs() < 1e-12, "sample at t = {t} not stored");
        let (m, v) = ou_exact_marginal(1.0, 0.04, sigma, t);
        let norm = 1.0 / (2.0 * std::f64::consts::PI * v).sqrt();
        let terms: Vec<Real> = (0..grid.cell_count())
            .map(|k| {
                let x = grid.coords(k)[0];
                let exact = norm * (-(x - m) * (x - m) / (2.0 * v)).exp();
                (u.values[k] * b.weight.cell[k] - exact).abs() * dx
            })
            .collect();
        let err = comp_sum(terms);
        println!("  t = {t}: L1 density error {err:.4e} (exact mean {m:.6}, var {v:.6})");
        worst = worst.max(err);
    }
    let ok = worst <= 2e-2;
    verdict(
        "07 (OU oracle)",
        ok,
        &format!("n=512, h=1/256, t in {{0.25, 0.5, 1}}: worst L1 error {worst:.4e} <= 2e-2"),
    );
    assert!(ok, "OU marginal error {worst:e} > 2e-2");
}

#[test]
fn acceptance_08_stationarity_of_normalized_weight() {
    let b = bundle(&presets::ornstein_uhlenbeck(1, 1.0), 256);
    let u0 = InitialData::Constant { value: 1.0, normalize: true }
        .build(&b)
        .expect("normalized constant builds");
    let traj = evolve(&b, &u0, 1.0, 32, &cfg()).expect("evolution runs");
    let drift = norm_l1_rho(&traj.final_field().sub(&u0), &b.grid, &b.weight).expect("norm");
    let ok = drift <= 1e-9;
    verdict(
        "08 (stationarity)",
        ok,
        &format!("|u(1) - 1/Z|_1,rho = {drift:.3e} <= 1e-9"),
    );
    assert!(ok, "stationary profile drifted by {drift:e}");
}

#[test]
fn acceptance_09_semigroup_property() {
    let b = bundle(&presets::ornstein_uhlenbeck(1, 1.0), 128);
    let u0 = InitialData::GaussianDensity { mean: 0.5, var: 0.25 }
        .build(&b)
        .expect("initial datum builds");

    let matched =
        check_semigroup_property(&b, &u0, 0.5, 0.5, 32, &cfg()).expect("matched split runs");
    let mismatched: Vec<Real> = [8usize, 16, 32]
        .iter()
        .map(|n| {
            semigroup_defect_mismatched(&b, &u0, 0.5, 0.5, *n, &cfg()).expect("mismatched runs")
        })
        .collect();
    let monotone = mismatched[1] < mismatched[0] && mismatched[2] < mismatched[1];
    let ok = matched <= 1e-10 && monotone;
    verdict(
        "09 (semigroup property)",
        ok,
        &format!(
            "matched residual {matched:.3e} <= 1e-10; mismatched defects {mismatched:?} \
             shrink under refinement"
        ),
    );
    assert!(ok, "matched {matched:e}, mismatched {mismatched:?}");
}

#[test]
fn acceptance_10_weak_form_order() {
    let spec = presets::ornstein_uhlenbeck(1, 1.0);
    let phis = [
        TestFunction::Gaussian { center: [0.0, 0.0], width: std::f64::consts::FRAC_1_SQRT_2 },
        TestFunction::Gaussian { center: [0.7, 0.0], width: 0.6 },
    ];
    // Simultaneous refinement: double the cells and the step count together.
    let levels = [(64usize, 16usize), (128, 32), (256, 64)];
    let mut min_order = Real::INFINITY;
    for (which, phi) in phis.iter().enumerate() {
        let residuals: Vec<Real> = levels
            .iter()
            .map(|(cells, steps)| {
                let b = bundle(&spec, *cells);
                let u0 = InitialData::GaussianDensity { mean: 0.5, var: 0.25 }
                    .build(&b)
                    .expect("initial datum builds");
                let traj = evolve(&b, &u0, 0.5, *steps, &cfg()).expect("evolution runs");
                weak_form_residual(&b, &traj, phi).expect("weak form evaluates")
            })
            .collect();
        println!("  test function {which}: residuals {residuals:?}");
        for pair in residuals.windows(2) {
            assert!(pair[1] < pair[0], "residuals not decreasing: {residuals:?}");
            min_order = min_order.min(observed_order(pair[0], pair[1]));
        }
    }
    let ok = min_order >= 1.0;
    verdict(
        "10 (weak-form order)",
        ok,
        &format!(
            "two Gaussian test functions over (h, dx) refinement x2: observed order \
             {min_order:.3} >= 1"
        ),
    );
    assert!(ok, "weak-form order {min_order} < 1");
}

#[test]
fn acceptance_11_particle_superposition() {
    let b = bundle(&presets::ornstein_uhlenbeck(1, 1.0), 512);
    let u0 = InitialData::GaussianDensity { mean: 1.0, var: 0.04 }
        .build(&b)
        .expect("initial datum builds");
    let traj = evolve(&b, &u0, 1.0, 256, &cfg()).expect("evolution runs");

    let n = 100_000;
    let dt = 1.0 / 256.0;
    let ens = simulate_pde_driven(&b, &traj, n, dt, 1.0, 0x5eed_000b).expect("particles run");

    // Reference moments of the PDE marginal v = u rho at t = 1.
    let grid = &b.grid;
    let u1 = traj.final_field();
    let vol = grid.cell_volume();
    let mass = comp_sum((0..grid.cell_count()).map(|k| u1.values[k] * b.weight.cell[k] * vol));
    let mean_pde = comp_sum(
        (0..grid.cell_count()).map(|k| grid.coords(k)[0] * u1.values[k] * b.weight.cell[k] * vol),
    ) / mass;
    let var_pde = comp_sum((0..grid.cell_count()).map(|k| {
        let d = grid.coords(k)[0] - mean_pde;
        d * d * u1.values[k] * b.weight.cell[k] * vol
    })) / mass;

    let nf = n as Real;
    let mean = comp_sum(ens.positions.iter().copied()) / nf;
    let var = comp_sum(ens.positions.iter().map(|x| (x - mean) * (x - mean))) / nf;
    let se_mean = (var_pde / nf).sqrt();
    let se_var = var_pde * (2.0 / nf).sqrt();

    let (_, w1) = compare_marginals(&b, &ens.positions, u1).expect("marginals compare");
    let (_, base_w1) =
        self_sampling_baseline(&b, u1, n, 0x5eed_000c, 9).expect("baseline computes");

    let mean_ok = (mean - mean_pde).abs() <= 3.0 * se_mean;
    let var_ok = (var - var_pde).abs() <= 3.0 * se_var;
    let w1_ok = w1 <= 3.0 * base_w1;
    let ok = mean_ok && var_ok && w1_ok;
    verdict(
        "11 (superposition)",
        ok,
        &format!(
            "N=1e5 at t=1: |mean gap| {:.2e} <= 3se {:.2e}; |var gap| {:.2e} <= 3se {:.2e}; \
             w1 {w1:.3e} <= 3x baseline {:.3e}",
            (mean - mean_pde).abs(),
            3.0 * se_mean,
            (var - var_pde).abs(),
            3.0 * se_var,
            3.0 * base_w1
        ),
    );
    assert!(
        ok,
        "mean {mean} vs {mean_pde} (se {se_mean:e}), var {var} vs {var_pde} (se {se_var:e}), \
         w1 {w1:e} vs baseline {base_w1:e}"
    );
}

#[test]
fn acceptance_12_linearized_flow_cross_check() {
    let spec = presets::ornstein_uhlenbeck(1, 1.0);
    let horizon = 0.5;
    // Scheme A (implicit solver) at the working resolution and at double
    // resolution in both h and dx; restriction by cell-pair averaging.
    let b256 = bundle(&spec, 256);
    let b512 = bundle(&spec, 512);
    let u0_256 = InitialData::GaussianDensity { mean: 0.5, var: 0.25 }
        .build(&b256)
        .expect("initial datum builds");
    let u0_512 = InitialData::GaussianDensity { mean: 0.5, var: 0.25 }
        .build(&b512)
        .expect("initial datum builds");
    let traj256 = evolve(&b256, &u0_256, horizon, 64, &cfg()).expect("coarse run");
    let traj512 = evolve(&b512, &u0_512, horizon, 128, &cfg()).expect("fine run");

    let dx = b256.grid.dx();
    let v_of = |b: &OperatorBundle, u: &DensityField| -> Vec<Real> {
        (0..b.grid.cell_count())
            .map(|k| u.values[k] * b.weight.cell[k])
            .collect()
    };
    let l1_gap = |coarse: &[Real], fine_restricted: &[Real]| -> Real {
        comp_sum(
            coarse
                .iter()
                .zip(fine_restricted)
                .map(|(c, f)| (c - f).abs() * dx),
        )
    };

    // Refinement estimate of the implicit scheme's own error at n=256.
    let est_a = l1_gap(
        &v_of(&b256, traj256.final_field()),
        &coarsen_pairs(&v_of(&b512, traj512.final_field())),
    );
    // Refinement estimate of the explicit linearized scheme's error.
    let zeta256 =
        linearized_flow_terminal(&b256, &traj256, 0.0, horizon).expect("explicit coarse run");
    let zeta512 =
        linearized_flow_terminal(&b512, &traj512, 0.0, horizon).expect("explicit fine run");
    let est_b = l1_gap(&zeta256, &coarsen_pairs(&zeta512));

    let residual =
        linearized_flow_residual(&b256, &traj256, 0.0, horizon).expect("cross-check runs");
    let budget = 5.0 * (est_a + est_b);
    let ok = residual <= budget;
    verdict(
        "12 (linearized flow)",
        ok,
        &format!(
            "two-scheme residual {residual:.3e} <= 5 x (est_A {est_a:.3e} + est_B {est_b:.3e}) \
             = {budget:.3e} at n=256"
        ),
    );
    assert!(ok, "residual {residual:e} exceeds error budget {budget:e}");
}

#[test]
fn acceptance_13_centered_scheme_breaks_contraction() {
    // Identical trials to the porous half of criterion 2, with the only
    // change being the face scheme: the suite must now catch violations,
    // otherwise criterion 2 has no teeth.
    let centered = bundle(&presets::porous_medium_strong_drift(1), 128)
        .with_face_scheme(FaceScheme::Centered);
    let outcomes = resolvent_trial_suite(&centered, TRIALS_PER_FAMILY, TRIAL_SEED_POROUS, &cfg())
        .expect("centered trial suite runs");
    let contraction = find(&outcomes, "weighted-l1-contraction");
    let ok = contraction.violations >= 1;
    verdict(
        "13 (mutation sensitivity)",
        ok,
        &format!(
            "centered faces on the criterion-2 porous trials: {} / {} contraction violations \
             (worst ratio {:.6}); upwind version has zero",
            contraction.violations, contraction.trials, contraction.worst
        ),
    );
    assert!(ok, "the centered mutation was not caught by the contraction trials");
}

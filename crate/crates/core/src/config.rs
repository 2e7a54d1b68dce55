//! Flat `key = value` run configuration.
//!
//! The format is deliberately primitive: one assignment per line, `#` starts
//! a comment, dotted keys group sections. Example:
//!
//! ```text
//! run.name      = ou-demo
//! domain.dim    = 1
//! domain.cells  = 256
//! potential.kind = quadratic
//! potential.a    = 1.0
//! beta.kind      = linear
//! beta.slope     = 0.5
//! time.horizon   = 1.0
//! time.steps     = 64
//! u0.kind        = gaussian
//! u0.mean        = 1.0
//! u0.var         = 0.04
//! ```
//!
//! Unknown keys are rejected (they are almost always typos). Command-line
//! overrides are additional `key=value` strings applied on top of the file.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{
    normalize_probability, Coefficients, DensityField, Mobility, Nonlinearity, Potential,
    ProblemSpec, VectorField,
};
use crate::operators::OperatorBundle;
use crate::presets::DEFAULT_WALL_DECAY;
use crate::resolvent::ResolventConfig;
use crate::Real;

/// Parsed key-value store with consumption tracking.
pub struct RawConfig {
    map: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
}

impl RawConfig {
    /// Parse config text; later assignments win over earlier ones.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!(
                    "line {}: empty key or value in '{line}'",
                    lineno + 1
                )));
            }
            map.insert(key.to_string(), value.to_string());
        }
        Ok(Self {
            map,
            consumed: BTreeSet::new(),
        })
    }

    /// Apply `key=value` override strings (e.g. from the command line).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let Some((key, value)) = o.split_once('=') else {
                return Err(Error::Config(format!(
                    "override '{o}' is not of the form key=value"
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("override '{o}' has an empty side")));
            }
            self.map.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    pub fn get_str(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    pub fn get_opt_str(&mut self, key: &str) -> Option<String> {
        self.take(key)
    }

    pub fn get_real(&mut self, key: &str, default: Real) -> Result<Real> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s.parse::<Real>().map_err(|_| {
                Error::Config(format!("key '{key}': invalid number '{s}'"))
            }),
        }
    }

    pub fn get_opt_real(&mut self, key: &str) -> Result<Option<Real>> {
        match self.take(key) {
            None => Ok(None),
            Some(s) => s
                .parse::<Real>()
                .map(Some)
                .map_err(|_| Error::Config(format!("key '{key}': invalid number '{s}'"))),
        }
    }

    pub fn get_usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s.parse::<usize>().map_err(|_| {
                Error::Config(format!("key '{key}': invalid integer '{s}'"))
            }),
        }
    }

    pub fn get_u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(s) => s.parse::<u64>().map_err(|_| {
                Error::Config(format!("key '{key}': invalid integer '{s}'"))
            }),
        }
    }

    /// Error on any key that was never consumed by a getter.
    pub fn ensure_fully_consumed(&self) -> Result<()> {
        let unknown: Vec<&String> = self
            .map
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unknown configuration keys: {}",
                unknown
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}

/// Initial data recipes buildable on any grid.
#[derive(Clone, Debug)]
pub enum InitialData {
    /// The probability density u0 rho = N(mean, var) (axis 0; centered on
    /// the remaining axes), renormalized on the truncated box.
    GaussianDensity { mean: Real, var: Real },
    /// u0 == value, optionally normalized to unit weighted mass.
    Constant { value: Real, normalize: bool },
    /// u0 = indicator of the cube |x_k - center| <= halfwidth, normalized.
    Indicator { center: Real, halfwidth: Real },
}

impl InitialData {
    pub fn build(&self, bundle: &OperatorBundle) -> Result<DensityField> {
        let grid = &bundle.grid;
        match self {
            InitialData::GaussianDensity { mean, var } => {
                if !(*var > 0.0) {
                    return Err(Error::Config(format!(
                        "initial Gaussian variance must be positive, got {var}"
                    )));
                }
                let dim = grid.dim();
                let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
                let field = DensityField::from_fn(grid, |x| {
                    let mut p = 1.0;
                    for k in 0..dim {
                        let c = if k == 0 { *mean } else { 0.0 };
                        p *= norm * (-(x[k] - c) * (x[k] - c) / (2.0 * var)).exp();
                    }
                    p * bundle.spec.potential.eval(x).exp()
                });
                normalize_probability(&field, grid, &bundle.weight)
            }
            InitialData::Constant { value, normalize } => {
                let field = DensityField::constant(grid, *value);
                if *normalize {
                    normalize_probability(&field, grid, &bundle.weight)
                } else {
                    Ok(field)
                }
            }
            InitialData::Indicator { center, halfwidth } => {
                if !(*halfwidth > 0.0) {
                    return Err(Error::Config(format!(
                        "indicator halfwidth must be positive, got {halfwidth}"
                    )));
                }
                let dim = grid.dim();
                let field = DensityField::from_fn(grid, |x| {
                    let inside = (0..dim).all(|k| (x[k] - center).abs() <= *halfwidth);
                    if inside {
                        1.0
                    } else {
                        0.0
                    }
                });
                normalize_probability(&field, grid, &bundle.weight)
            }
        }
    }
}

/// Particle-simulation settings.
#[derive(Clone, Debug)]
pub struct SdeSettings {
    pub particles: usize,
    pub dt: Real,
    pub seed: u64,
    /// None selects Silverman's rule each step.
    pub bandwidth: Option<Real>,
    /// "pde_driven", "self_consistent", or "both".
    pub mode: String,
}

/// Validation-suite settings.
#[derive(Clone, Debug)]
pub struct ValidateSettings {
    pub trials: usize,
    pub seed: u64,
}

/// Marginal-comparison settings.
#[derive(Clone, Debug)]
pub struct CompareSettings {
    /// Output directory of a prior solve holding the reference trajectory.
    pub trajectory_dir: Option<String>,
    /// Accepted multiple of the self-sampling noise floor.
    pub band: Real,
    /// Independent draws used to estimate that floor (median over draws).
    pub baseline_trials: usize,
}

/// A fully resolved run description.
#[derive(Clone, Debug)]
pub struct RunSetup {
    pub name: String,
    pub spec: ProblemSpec,
    pub n_cells: usize,
    pub horizon: Real,
    pub steps: usize,
    pub resolvent: ResolventConfig,
    pub initial: InitialData,
    pub sde: SdeSettings,
    pub validate: ValidateSettings,
    pub compare: CompareSettings,
}

impl RunSetup {
    /// Interpret a parsed config, consuming every recognized key.
    pub fn from_raw(cfg: &mut RawConfig) -> Result<RunSetup> {
        let name = cfg.get_str("run.name", "run");

        // Potential.
        let pot_kind = cfg.get_str("potential.kind", "quadratic");
        let potential = match pot_kind.as_str() {
            "quadratic" => Potential::Quadratic {
                a: cfg.get_real("potential.a", 1.0)?,
            },
            "quartic" => Potential::Quartic {
                a: cfg.get_real("potential.a", 1.0)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "potential.kind '{other}' is not one of: quadratic, quartic"
                )))
            }
        };

        // Domain.
        let dim = cfg.get_usize("domain.dim", 1)?;
        let radius = match cfg.get_opt_real("domain.radius")? {
            Some(r) => r,
            None => potential.suggested_radius(dim.max(1), DEFAULT_WALL_DECAY)?,
        };
        let n_cells = cfg.get_usize("domain.cells", 128)?;

        // Diffusion nonlinearity.
        let beta_kind = cfg.get_str("beta.kind", "linear");
        let beta = match beta_kind.as_str() {
            "linear" => Nonlinearity::Linear {
                slope: cfg.get_real("beta.slope", 0.5)?,
            },
            "power" => Nonlinearity::PowerLaw {
                coeff: cfg.get_real("beta.coeff", 1.0)?,
                exponent: cfg.get_real("beta.exponent", 2.0)?,
            },
            "linear_plus_cubic" => Nonlinearity::LinearPlusCubic {
                lin: cfg.get_real("beta.lin", 1.0)?,
                cubic: cfg.get_real("beta.cubic", 1.0)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "beta.kind '{other}' is not one of: linear, power, linear_plus_cubic"
                )))
            }
        };

        // Mobility.
        let b_kind = cfg.get_str("b.kind", "zero");
        let b = match b_kind.as_str() {
            "zero" => Mobility::Zero,
            "constant" => Mobility::Constant {
                value: cfg.get_real("b.value", 1.0)?,
            },
            "rational_bump" => Mobility::RationalBump {
                scale: cfg.get_real("b.scale", 1.0)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "b.kind '{other}' is not one of: zero, constant, rational_bump"
                )))
            }
        };

        // Drift field.
        let d_kind = cfg.get_str("D.kind", "zero");
        let drift = match d_kind.as_str() {
            "zero" => VectorField::Zero,
            "constant" => VectorField::Constant {
                components: [cfg.get_real("D.x", 0.0)?, cfg.get_real("D.y", 0.0)?],
            },
            "gauss_x" => VectorField::GaussX {
                amp: cfg.get_real("D.amp", 0.25)?,
                width: cfg.get_real("D.width", 1.0)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "D.kind '{other}' is not one of: zero, constant, gauss_x"
                )))
            }
        };

        let spec = ProblemSpec::new(dim, radius, potential, Coefficients::new(beta, b, drift));

        // Time stepping.
        let horizon = cfg.get_real("time.horizon", 1.0)?;
        let steps = cfg.get_usize("time.steps", 64)?;

        // Resolvent solver knobs.
        let mut resolvent = ResolventConfig::default();
        resolvent.tol = cfg.get_real("resolvent.tol", resolvent.tol)?;
        resolvent.max_iter = cfg.get_usize("resolvent.max_iter", resolvent.max_iter)?;
        resolvent.eps0 = cfg.get_real("resolvent.eps0", resolvent.eps0)?;
        resolvent.eps_ratio = cfg.get_real("resolvent.eps_ratio", resolvent.eps_ratio)?;
        resolvent.eps_floor = cfg.get_real("resolvent.eps_floor", resolvent.eps_floor)?;
        resolvent.max_line_search =
            cfg.get_usize("resolvent.max_line_search", resolvent.max_line_search)?;

        // Initial data.
        let u0_kind = cfg.get_str("u0.kind", "constant");
        let initial = match u0_kind.as_str() {
            "gaussian" => InitialData::GaussianDensity {
                mean: cfg.get_real("u0.mean", 0.0)?,
                var: cfg.get_real("u0.var", 0.25)?,
            },
            "constant" => InitialData::Constant {
                value: cfg.get_real("u0.value", 1.0)?,
                normalize: cfg.get_str("u0.normalize", "true") == "true",
            },
            "indicator" => InitialData::Indicator {
                center: cfg.get_real("u0.center", 0.0)?,
                halfwidth: cfg.get_real("u0.halfwidth", 0.5)?,
            },
            other => {
                return Err(Error::Config(format!(
                    "u0.kind '{other}' is not one of: gaussian, constant, indicator"
                )))
            }
        };

        // Particles.
        let sde = SdeSettings {
            particles: cfg.get_usize("sde.particles", 10_000)?,
            dt: cfg.get_real("sde.dt", horizon / steps as Real)?,
            seed: cfg.get_u64("sde.seed", 1)?,
            bandwidth: cfg.get_opt_real("sde.bandwidth")?,
            mode: cfg.get_str("sde.mode", "pde_driven"),
        };
        if !matches!(sde.mode.as_str(), "pde_driven" | "self_consistent" | "both") {
            return Err(Error::Config(format!(
                "sde.mode '{}' is not one of: pde_driven, self_consistent, both",
                sde.mode
            )));
        }

        let validate = ValidateSettings {
            trials: cfg.get_usize("validate.trials", 20)?,
            seed: cfg.get_u64("validate.seed", 7)?,
        };

        let compare = CompareSettings {
            trajectory_dir: cfg.get_opt_str("compare.trajectory_dir"),
            band: cfg.get_real("compare.band", 3.0)?,
            baseline_trials: cfg.get_usize("compare.baseline_trials", 9)?,
        };
        if !(compare.band > 0.0 && compare.band.is_finite()) {
            return Err(Error::Config(format!(
                "compare.band must be positive, got {}",
                compare.band
            )));
        }

        cfg.ensure_fully_consumed()?;
        Ok(RunSetup {
            name,
            spec,
            n_cells,
            horizon,
            steps,
            resolvent,
            initial,
            sde,
            validate,
            compare,
        })
    }

    /// Parse + interpret + apply overrides in one call.
    pub fn from_text(text: &str, overrides: &[String]) -> Result<RunSetup> {
        let mut raw = RawConfig::parse(text)?;
        raw.apply_overrides(overrides)?;
        RunSetup::from_raw(&mut raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rho_mass;

    const OU_TEXT: &str = "
# Linear diffusion in a quadratic well.
run.name       = ou-test
domain.cells   = 64
potential.kind = quadratic
potential.a    = 1.0
beta.kind      = linear
beta.slope     = 0.5
time.horizon   = 0.5
time.steps     = 16
u0.kind        = gaussian
u0.mean        = 1.0
u0.var         = 0.04
";

    #[test]
    fn parses_a_complete_round_trip() {
        let setup = RunSetup::from_text(OU_TEXT, &[]).unwrap();
        assert_eq!(setup.name, "ou-test");
        assert_eq!(setup.n_cells, 64);
        assert_eq!(setup.steps, 16);
        assert!((setup.horizon - 0.5).abs() < 1e-15);
        // Radius defaulted from the decay target.
        assert!((setup.spec.radius - (1e8_f64.ln()).sqrt()).abs() < 1e-9);
        let bundle = OperatorBundle::new(&setup.spec, setup.n_cells).unwrap();
        let u0 = setup.initial.build(&bundle).unwrap();
        let mass = rho_mass(&u0, &bundle.grid, &bundle.weight).unwrap();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overrides_win_over_the_file() {
        let setup =
            RunSetup::from_text(OU_TEXT, &["time.steps=32".into(), "run.name=other".into()])
                .unwrap();
        assert_eq!(setup.steps, 32);
        assert_eq!(setup.name, "other");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunSetup::from_text("time.stepz = 4\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("time.stepz"), "{msg}");
    }

    #[test]
    fn malformed_lines_and_values_are_rejected() {
        assert!(RawConfig::parse("this is not an assignment\n").is_err());
        assert!(RunSetup::from_text("time.steps = abc\n", &[]).is_err());
        assert!(RunSetup::from_text("beta.kind = exotic\n", &[]).is_err());
        assert!(RunSetup::from_text("", &["broken-override".into()]).is_err());
    }

    #[test]
    fn comments_and_spacing_are_tolerated() {
        let mut raw = RawConfig::parse("  # full comment\n a.b = 1 # trailing\n\n").unwrap();
        assert_eq!(raw.get_str("a.b", ""), "1");
    }
}

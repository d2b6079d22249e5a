//! Run configuration: a sectioned TOML file.

use aclab::io::read_solution;
use aclab::solver::{FlowOptions, InitRecipe, NewtonOptions, SweepOptions};
use aclab::{Domain, DoubleWell, Shape};
use serde::Deserialize;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("missing [{0}] block")]
    MissingBlock(&'static str),
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainBlock,
    #[serde(default)]
    pub potential: PotentialBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub init: InitBlock,
    pub sweep: SweepBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub shape: String,
    pub params: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

fn default_kind() -> String {
    "standard-quartic".into()
}

impl Default for PotentialBlock {
    fn default() -> Self {
        PotentialBlock {
            kind: default_kind(),
            coefficients: vec![],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub dt_factor: f64,
    pub stop_tol: f64,
    pub max_steps: usize,
    pub tol: f64,
    pub newton_max_iter: usize,
    pub newton_basin: Option<f64>,
    pub constraint_mean: Option<f64>,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let f = FlowOptions::default();
        let n = NewtonOptions::default();
        SolverBlock {
            dt_factor: f.dt_factor,
            stop_tol: f.stop_tol,
            max_steps: f.max_steps,
            tol: n.tol,
            newton_max_iter: n.max_iter,
            newton_basin: None,
            constraint_mean: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    #[serde(default = "default_recipe")]
    pub recipe: String,
    pub value: Option<f64>,
    pub at: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub axis: Option<usize>,
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub path: Option<PathBuf>,
}

fn default_recipe() -> String {
    "constant".into()
}

impl Default for InitBlock {
    fn default() -> Self {
        InitBlock {
            recipe: default_recipe(),
            value: None,
            at: None,
            lower: None,
            upper: None,
            axis: None,
            center: None,
            radius: None,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub epsilons: Vec<f64>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsBlock {
    pub checks: Vec<String>,
    pub centers: usize,
    pub fields: usize,
    pub monotonicity_tol: f64,
    pub pohozaev_rho: f64,
    pub boundary_cutoff: f64,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        DiagnosticsBlock {
            checks: vec![],
            centers: 10,
            fields: 5,
            monotonicity_tol: 1e-3,
            pohozaev_rho: 0.3,
            boundary_cutoff: 0.05,
        }
    }
}

pub const CHECK_NAMES: [&str; 6] = [
    "density",
    "equipartition",
    "ratio",
    "pohozaev",
    "boundary-energy",
    "varifold",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: PathBuf::from("out"),
        }
    }
}

/// 1-based line of `key` inside `[section]` (or of the section header when `key` is empty).
fn line_of(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (k, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_empty() && current == section {
                return Some(k + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim() == key {
                    return Some(k + 1);
                }
            }
        }
    }
    None
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<RunConfig, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut cfg = RunConfig::parse(&source)?;
        // Relative paths inside the file are relative to the file.
        if let (Some(p), Some(dir)) = (cfg.init.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(source: &str) -> Result<RunConfig, ConfigError> {
        let table: toml::Table = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for block in ["domain", "sweep"] {
            if !table.contains_key(block) {
                return Err(ConfigError::MissingBlock(block));
            }
        }
        let cfg: RunConfig = toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate(source)?;
        Ok(cfg)
    }

    fn validate(&self, source: &str) -> Result<(), ConfigError> {
        let invalid = |section: &str, key: &str, message: String| ConfigError::Invalid {
            key: format!("{section}.{key}"),
            line: line_of(source, section, key),
            message,
        };
        let e = &self.sweep.epsilons;
        if e.is_empty() {
            return Err(invalid("sweep", "epsilons", "at least one epsilon is required".into()));
        }
        if e.windows(2).any(|p| p[1] >= p[0]) {
            return Err(invalid("sweep", "epsilons", "sweep.epsilons must descend".into()));
        }
        if e.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err(invalid("sweep", "epsilons", "epsilons must be positive".into()));
        }
        self.shape().map_err(|m| invalid("domain", "params", m))?;
        if !matches!(self.potential.kind.as_str(), "standard-quartic" | "user-polynomial") {
            return Err(invalid(
                "potential",
                "kind",
                format!(
                    "unknown kind {:?} (standard-quartic, user-polynomial)",
                    self.potential.kind
                ),
            ));
        }
        if self.potential.kind == "user-polynomial" && self.potential.coefficients.is_empty() {
            return Err(invalid(
                "potential",
                "coefficients",
                "user-polynomial needs coefficients".into(),
            ));
        }
        if let Some(m) = self.solver.constraint_mean {
            if !(m > -1.0 && m < 1.0) {
                return Err(invalid(
                    "solver",
                    "constraint_mean",
                    format!("must lie in (-1, 1), got {m}"),
                ));
            }
        }
        if !(self.solver.dt_factor > 0.0 && self.solver.dt_factor <= 0.5) {
            return Err(invalid(
                "solver",
                "dt_factor",
                format!("must lie in (0, 0.5], got {}", self.solver.dt_factor),
            ));
        }
        self.recipe_shape().map_err(|(k, m)| invalid("init", k, m))?;
        for c in &self.diagnostics.checks {
            if !CHECK_NAMES.contains(&c.as_str()) {
                return Err(invalid(
                    "diagnostics",
                    "checks",
                    format!("unknown check {c:?} (one of {CHECK_NAMES:?})"),
                ));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<Shape, String> {
        let p = &self.domain.params;
        let need = |n: usize| {
            if p.len() == n {
                Ok(())
            } else {
                Err(format!("shape {} takes {n} params, got {}", self.domain.shape, p.len()))
            }
        };
        Ok(match self.domain.shape.as_str() {
            "interval" => need(1).map(|_| Shape::Interval { length: p[0] })?,
            "rectangle" => need(2).map(|_| Shape::Rectangle {
                width: p[0],
                height: p[1],
            })?,
            "disk" => need(1).map(|_| Shape::Disk { radius: p[0] })?,
            "annulus" => need(2).map(|_| Shape::Annulus {
                inner: p[0],
                outer: p[1],
            })?,
            "half-disk" => need(1).map(|_| Shape::HalfDisk { radius: p[0] })?,
            s => {
                return Err(format!(
                    "unknown shape {s:?} (interval, rectangle, disk, annulus, half-disk)"
                ))
            }
        })
    }

    /// Checks that the recipe has its keys; `Err((key, message))` otherwise.
    fn recipe_shape(&self) -> Result<(), (&'static str, String)> {
        let i = &self.init;
        let missing = |k: &'static str| Err((k, format!("recipe {} needs init.{k}", i.recipe)));
        match i.recipe.as_str() {
            "constant" => i.value.map(|_| ()).map_or_else(|| missing("value"), Ok),
            "step-x" | "step-y" => i.at.map(|_| ()).map_or_else(|| missing("at"), Ok),
            "two-layer" => {
                if i.lower.is_none() {
                    missing("lower")
                } else if i.upper.is_none() {
                    missing("upper")
                } else {
                    Ok(())
                }
            }
            "radial" => {
                if i.center.is_none() {
                    missing("center")
                } else if i.radius.is_none() {
                    missing("radius")
                } else {
                    Ok(())
                }
            }
            "file" => i.path.as_ref().map(|_| ()).map_or_else(|| missing("path"), Ok),
            r => Err((
                "recipe",
                format!("unknown recipe {r:?} (constant, step-x, step-y, two-layer, radial, file)"),
            )),
        }
    }

    pub fn build_domain(&self) -> Result<Arc<Domain>, ConfigError> {
        let shape = self.shape().map_err(|m| ConfigError::Invalid {
            key: "domain.params".into(),
            line: None,
            message: m,
        })?;
        Domain::build(shape, &self.domain.cells)
            .map(Arc::new)
            .map_err(|e| ConfigError::Invalid {
                key: "domain".into(),
                line: None,
                message: e.to_string(),
            })
    }

    pub fn potential(&self) -> Result<DoubleWell, ConfigError> {
        match self.potential.kind.as_str() {
            "standard-quartic" => Ok(DoubleWell::standard_quartic()),
            _ => DoubleWell::from_polynomial(self.potential.coefficients.clone()).map_err(|e| ConfigError::Invalid {
                key: "potential.coefficients".into(),
                line: None,
                message: e.to_string(),
            }),
        }
    }

    pub fn init_recipe(&self, domain: &Arc<Domain>) -> Result<InitRecipe, ConfigError> {
        let i = &self.init;
        Ok(match i.recipe.as_str() {
            "constant" => InitRecipe::Constant {
                value: i.value.unwrap_or(0.0),
            },
            "step-x" => InitRecipe::StepX {
                at: i.at.unwrap_or(0.0),
            },
            "step-y" => InitRecipe::StepY {
                at: i.at.unwrap_or(0.0),
            },
            "two-layer" => InitRecipe::TwoLayer {
                lower: i.lower.unwrap_or(0.0),
                upper: i.upper.unwrap_or(0.0),
                axis: i.axis.unwrap_or(0),
            },
            "radial" => InitRecipe::Radial {
                center: i.center.unwrap_or([0.0; 2]),
                radius: i.radius.unwrap_or(0.0),
            },
            _ => {
                let path = i.path.clone().unwrap_or_default();
                let file = File::open(&path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let sol = read_solution(file, Some(domain.clone())).map_err(|e| ConfigError::Invalid {
                    key: "init.path".into(),
                    line: None,
                    message: e.to_string(),
                })?;
                InitRecipe::Values {
                    values: sol.field.values,
                }
            }
        })
    }

    pub fn sweep_options(&self, domain: &Arc<Domain>, parallel_cold: bool) -> Result<SweepOptions, ConfigError> {
        let s = &self.solver;
        Ok(SweepOptions {
            epsilons: self.sweep.epsilons.clone(),
            constraint: s.constraint_mean,
            init: self.init_recipe(domain)?,
            flow: FlowOptions {
                dt_factor: s.dt_factor,
                stop_tol: s.stop_tol,
                max_steps: s.max_steps,
                constraint: s.constraint_mean,
            },
            newton: NewtonOptions {
                tol: s.tol,
                max_iter: s.newton_max_iter,
                basin: s.newton_basin.unwrap_or(f64::INFINITY),
            },
            warm_start: self.sweep.warm_start && !parallel_cold,
        })
    }
}

/// The documented default configuration written by `example-config`.
pub const EXAMPLE_CONFIG: &str = r#"# Allen-Cahn lab run configuration. Every key below shows its default;
# only [domain] and [sweep] are required.

# Seed for sampled diagnostic centers and random test fields.
seed = 0

[domain]
# interval | rectangle | disk | annulus | half-disk
shape = "interval"
# interval: [length]; rectangle: [width, height]; disk: [radius];
# annulus: [inner, outer]; half-disk: [radius]
params = [1.0]
# Cells per axis. A single entry on a 2D shape picks the other axis from
# the aspect ratio; cells must be square.
cells = [2048]

[potential]
# standard-quartic: W(s) = (1 - s^2)^2 / 4
# user-polynomial: W given by `coefficients`, ascending degree
kind = "standard-quartic"
coefficients = []

[solver]
# Flow time step as a multiple of epsilon, at most 0.5.
dt_factor = 0.25
# The flow hands over to Newton once the residual is below stop_tol.
stop_tol = 1e-6
max_steps = 20000
# Newton target residual and iteration cap.
tol = 1e-10
newton_max_iter = 30
# Largest flow residual accepted as a Newton start (omit for no limit).
# newton_basin = 1e-2
# Target mean of u; omit for the unconstrained problem.
constraint_mean = 0.0

[init]
# constant (value) | step-x (at) | step-y (at) | two-layer (lower, upper, axis)
# | radial (center, radius) | file (path to a solution file)
recipe = "step-x"
at = 0.5

[sweep]
# Strictly descending, each larger than 2h.
epsilons = [0.1, 0.05, 0.025]
# Warm-start each epsilon from the previous solution (--parallel-cold overrides).
warm_start = true

[diagnostics]
# Any of: density, equipartition, ratio, pohozaev, boundary-energy, varifold.
checks = ["density", "equipartition", "ratio", "pohozaev", "boundary-energy", "varifold"]
# Sampled ratio-curve centers and random tangential test fields per solution.
centers = 10
fields = 5
monotonicity_tol = 1e-3
# Radius of the radial Pohozaev field and cutoff scale of the boundary field.
pohozaev_rho = 0.3
boundary_cutoff = 0.05

[output]
dir = "out"
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_parses() {
        let cfg = RunConfig::parse(EXAMPLE_CONFIG).unwrap();
        assert_eq!(cfg.sweep.epsilons, vec![0.1, 0.05, 0.025]);
        assert_eq!(cfg.diagnostics.checks.len(), CHECK_NAMES.len());
        assert!(matches!(cfg.shape().unwrap(), Shape::Interval { .. }));
    }

    #[test]
    fn ascending_epsilons_are_rejected_with_their_line() {
        let src = EXAMPLE_CONFIG.replace("epsilons = [0.1, 0.05, 0.025]", "epsilons = [0.025, 0.05]");
        let err = RunConfig::parse(&src).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sweep.epsilons must descend"), "{msg}");
        let line = src.lines().position(|l| l.starts_with("epsilons")).unwrap() + 1;
        assert!(msg.contains(&format!("line {line}")), "{msg}");
    }

    #[test]
    fn missing_domain_is_named() {
        let err = RunConfig::parse("[sweep]\nepsilons = [0.1]\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingBlock("domain")));
        assert!(err.to_string().contains("[domain]"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = RunConfig::parse("[domain]\nshape = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn bad_enums_are_rejected() {
        for (from, to) in [
            ("shape = \"interval\"", "shape = \"triangle\""),
            ("kind = \"standard-quartic\"", "kind = \"sextic\""),
            ("recipe = \"step-x\"", "recipe = \"noise\""),
            ("\"varifold\"]", "\"curvature\"]"),
        ] {
            let src = EXAMPLE_CONFIG.replace(from, to);
            assert!(
                matches!(RunConfig::parse(&src), Err(ConfigError::Invalid { .. })),
                "{to}"
            );
        }
    }
}

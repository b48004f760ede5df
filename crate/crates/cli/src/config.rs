//! Scenario configuration documents (TOML).
//!
//! ```toml
//! scenario = "symplectic"      # symplectic | kaehler | special-complex | custom
//! seed = 0
//! bundle = "trivial"
//! init = "perturbed-closed:1e-3"
//! outputs = "out"
//!
//! [grid]
//! n = 4
//! sizes = [3, 3, 3, 3]
//! spacings = [1.0, 1.0, 1.0, 1.0]
//!
//! [flow]
//! step = "auto"
//! max_steps = 2000
//! project_each_step = false
//! renormalize = false
//! ```
//!
//! `k` and `rank` are only accepted for `custom`. Defaults: `seed = 0`,
//! `bundle = "trivial"`, `init = "closed"`, `outputs = "out"`, spacings all
//! 1.0, `step = "auto"`, `max_steps = 2000`, both flow flags false.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use covforms_core::variational::StepSize;
use covforms_core::{ConnectionSpec, TorusGrid};
use serde::Deserialize;
use toml::Spanned;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Symplectic,
    Kaehler,
    SpecialComplex,
    Custom,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Symplectic => "symplectic",
            Self::Kaehler => "kaehler",
            Self::SpecialComplex => "special-complex",
            Self::Custom => "custom",
        }
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symplectic" => Ok(Self::Symplectic),
            "kaehler" => Ok(Self::Kaehler),
            "special-complex" => Ok(Self::SpecialComplex),
            "custom" => Ok(Self::Custom),
            _ => Err(CliError::Config(format!(
                "unknown scenario {s:?}; expected symplectic, kaehler, special-complex or custom"
            ))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Closed,
    PerturbedClosed(f64),
    Random(f64),
    File(PathBuf),
}

impl FromStr for InitSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let amplitude = |a: &str| -> std::result::Result<f64, String> {
            match a.parse::<f64>() {
                Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
                _ => Err(format!("amplitude {a:?} is not a non-negative number")),
            }
        };
        if s == "closed" {
            Ok(Self::Closed)
        } else if let Some(a) = s.strip_prefix("perturbed-closed:") {
            Ok(Self::PerturbedClosed(amplitude(a)?))
        } else if let Some(a) = s.strip_prefix("random:") {
            Ok(Self::Random(amplitude(a)?))
        } else if let Some(p) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
            Ok(Self::File(PathBuf::from(p)))
        } else {
            Err(format!(
                "unknown init {s:?}; expected closed, perturbed-closed:<amplitude>, random:<amplitude> or file:<path>"
            ))
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Closed => write!(f, "closed"),
            Self::PerturbedClosed(a) => write!(f, "perturbed-closed:{a}"),
            Self::Random(a) => write!(f, "random:{a}"),
            Self::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub sizes: Vec<usize>,
    pub spacings: Vec<f64>,
}

impl GridConfig {
    pub fn build(&self) -> covforms_core::Result<TorusGrid> {
        TorusGrid::new(self.n, &self.sizes, &self.spacings)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub step: StepSize,
    pub max_steps: usize,
    pub project_each_step: bool,
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub grid: GridConfig,
    pub bundle: ConnectionSpec,
    /// Cochain degree of the functional.
    pub k: usize,
    /// Rank of the bundle the flow runs on.
    pub rank: usize,
    pub seed: u64,
    pub init: InitSpec,
    pub flow: FlowConfig,
    pub outputs: PathBuf,
}

impl ScenarioConfig {
    /// Re-targets the configuration at another scenario, fixing `k` and the rank.
    pub fn with_scenario(&self, scenario: Scenario) -> Result<Self> {
        let mut out = self.clone();
        if matches!(scenario, Scenario::Kaehler | Scenario::SpecialComplex) && self.grid.n % 2 == 1 {
            return Err(CliError::Config(format!(
                "scenario {scenario} needs an even dimension, grid has n = {}",
                self.grid.n
            )));
        }
        if scenario != Scenario::Custom {
            let (k, rank) = fixed_degree_and_rank(scenario, self.grid.n);
            out.k = k;
            out.rank = rank;
        }
        out.scenario = scenario;
        Ok(out)
    }

    /// Makes relative file references relative to `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        if let InitSpec::File(p) = &self.init {
            if p.is_relative() {
                self.init = InitSpec::File(dir.join(p));
            }
        }
        if let ConnectionSpec::File(p) = &self.bundle {
            if Path::new(p).is_relative() {
                self.bundle = ConnectionSpec::File(dir.join(p).to_string_lossy().into_owned());
            }
        }
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario.name(),
            "grid": {
                "n": self.grid.n,
                "sizes": self.grid.sizes,
                "spacings": self.grid.spacings,
            },
            "bundle": self.bundle.to_string(),
            "k": self.k,
            "rank": self.rank,
            "seed": self.seed,
            "init": self.init.to_string(),
            "flow": {
                "step": match self.flow.step {
                    StepSize::Auto => serde_json::json!("auto"),
                    StepSize::Fixed(t) => serde_json::json!(t),
                },
                "max_steps": self.flow.max_steps,
                "project_each_step": self.flow.project_each_step,
                "renormalize": self.flow.renormalize,
            },
            "outputs": self.outputs.display().to_string(),
        })
    }
}

/// `(k, rank)` for the fixed scenarios.
pub fn fixed_degree_and_rank(scenario: Scenario, n: usize) -> (usize, usize) {
    match scenario {
        Scenario::Symplectic => (2, 1),
        Scenario::Kaehler => (0, n * n),
        Scenario::SpecialComplex => (1, n),
        Scenario::Custom => (0, 1),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Scenario,
    grid: RawGrid,
    #[serde(default)]
    bundle: Option<Spanned<String>>,
    #[serde(default)]
    k: Option<Spanned<usize>>,
    #[serde(default)]
    rank: Option<Spanned<usize>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    init: Option<Spanned<String>>,
    #[serde(default)]
    flow: Option<RawFlow>,
    #[serde(default)]
    outputs: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: Spanned<usize>,
    sizes: Spanned<Vec<usize>>,
    #[serde(default)]
    spacings: Option<Spanned<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawStep {
    Number(f64),
    Word(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFlow {
    #[serde(default)]
    step: Option<Spanned<RawStep>>,
    #[serde(default = "default_max_steps")]
    max_steps: usize,
    #[serde(default)]
    project_each_step: bool,
    #[serde(default)]
    renormalize: bool,
}

fn default_max_steps() -> usize {
    2000
}

/// 1-based line number of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn at<T>(text: &str, field: &str, spanned: &Spanned<T>, msg: impl fmt::Display) -> CliError {
    CliError::Config(format!(
        "line {}, field `{field}`: {msg}",
        line_of(text, spanned.span().start)
    ))
}

/// Strict parse: unknown keys, wrong types and invalid values are errors that
/// name the line and field.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;

    let n = *raw.grid.n.get_ref();
    let sizes = raw.grid.sizes.get_ref().clone();
    if sizes.len() != n {
        return Err(at(text, "grid.sizes", &raw.grid.sizes, format!("expected {n} entries, got {}", sizes.len())));
    }
    if let Some(i) = sizes.iter().position(|&s| s < 3) {
        return Err(at(
            text,
            "grid.sizes",
            &raw.grid.sizes,
            format!("sizes[{i}] = {}; every axis needs N_i >= 3 cells", sizes[i]),
        ));
    }
    let spacings = match &raw.grid.spacings {
        None => vec![1.0; n],
        Some(s) => {
            let v = s.get_ref().clone();
            if v.len() != n {
                return Err(at(text, "grid.spacings", s, format!("expected {n} entries, got {}", v.len())));
            }
            if v.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
                return Err(at(text, "grid.spacings", s, "spacings must be positive and finite"));
            }
            v
        }
    };
    let grid = GridConfig { n, sizes, spacings };
    grid.build().map_err(|e| at(text, "grid", &raw.grid.n, e))?;

    let (k, rank) = if raw.scenario == Scenario::Custom {
        let k = raw
            .k
            .as_ref()
            .ok_or_else(|| CliError::Config("field `k` is required for the custom scenario".into()))?;
        if *k.get_ref() > n {
            return Err(at(text, "k", k, format!("degree {} exceeds dimension {n}", k.get_ref())));
        }
        let rank = match &raw.rank {
            None => 1,
            Some(r) if *r.get_ref() == 0 => return Err(at(text, "rank", r, "rank must be positive")),
            Some(r) => *r.get_ref(),
        };
        (*k.get_ref(), rank)
    } else {
        for (field, value) in [("k", &raw.k), ("rank", &raw.rank)] {
            if let Some(v) = value {
                return Err(at(
                    text,
                    field,
                    v,
                    format!("fixed by scenario {}; only custom accepts it", raw.scenario.name()),
                ));
            }
        }
        let fixed = fixed_degree_and_rank(raw.scenario, n);
        if raw.scenario != Scenario::Symplectic && n % 2 == 1 {
            return Err(at(
                text,
                "grid.n",
                &raw.grid.n,
                format!("scenario {} needs an even dimension", raw.scenario.name()),
            ));
        }
        if raw.scenario == Scenario::Symplectic && n < 2 {
            return Err(at(text, "grid.n", &raw.grid.n, "symplectic needs n >= 2"));
        }
        fixed
    };

    let bundle = match &raw.bundle {
        None => ConnectionSpec::Trivial,
        Some(s) => s.get_ref().parse().map_err(|e| at(text, "bundle", s, e))?,
    };
    let init = match &raw.init {
        None => InitSpec::Closed,
        Some(s) => s.get_ref().parse().map_err(|e: String| at(text, "init", s, e))?,
    };

    let flow = match raw.flow {
        None => FlowConfig {
            step: StepSize::Auto,
            max_steps: default_max_steps(),
            project_each_step: false,
            renormalize: false,
        },
        Some(f) => {
            let step = match &f.step {
                None => StepSize::Auto,
                Some(s) => match s.get_ref() {
                    RawStep::Word(w) if w == "auto" => StepSize::Auto,
                    RawStep::Number(t) if t.is_finite() && *t > 0.0 => StepSize::Fixed(*t),
                    RawStep::Word(w) => return Err(at(text, "flow.step", s, format!("expected \"auto\" or a positive number, got {w:?}"))),
                    RawStep::Number(t) => return Err(at(text, "flow.step", s, format!("step must be positive, got {t}"))),
                },
            };
            FlowConfig {
                step,
                max_steps: f.max_steps,
                project_each_step: f.project_each_step,
                renormalize: f.renormalize,
            }
        }
    };

    Ok(ScenarioConfig {
        scenario: raw.scenario,
        grid,
        bundle,
        k,
        rank,
        seed: raw.seed,
        init,
        flow,
        outputs: PathBuf::from(raw.outputs.unwrap_or_else(|| "out".into())),
    })
}

/// Reads and parses a file; relative file references resolve against its directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    if let Some(dir) = path.parent() {
        cfg.resolve_paths(dir);
    }
    Ok(cfg)
}

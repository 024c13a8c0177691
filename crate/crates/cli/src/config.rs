use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use solenoid_core::multiplicity::MultFnJson;
use solenoid_core::transfer::StepFunctionJson;
use solenoid_core::wavelet::FilterJson;
use solenoid_core::{PointCode, SystemSpec};

/// A value given inline or as a path to a JSON file (relative to the config).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Ref<T> {
    Path(String),
    Inline(T),
}

impl<T: DeserializeOwned + Clone> Ref<T> {
    pub fn resolve(&self, base: &Path) -> Result<T> {
        match self {
            Ref::Inline(v) => Ok(v.clone()),
            Ref::Path(p) => {
                let path = base.join(p);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Pointwise for coefficient filters on the circle, step otherwise.
    #[default]
    Auto,
    Step,
    Pointwise,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_range: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: Ref<SystemSpec>,
    pub filter: Option<Ref<FilterJson>>,
    /// A filter given directly as a step function on any system (overrides `filter`).
    pub m0: Option<Ref<StepFunctionJson>>,
    pub weight: Option<Ref<StepFunctionJson>>,
    pub h: Option<Ref<StepFunctionJson>>,
    pub mu: Option<Ref<StepFunctionJson>>,
    pub xi: Option<Ref<StepFunctionJson>>,
    pub observable: Option<Ref<StepFunctionJson>>,
    pub multiplicity: Option<Ref<MultFnJson>>,
    pub start: Option<PointCode>,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_filter_level")]
    pub filter_level: u32,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default)]
    pub lift_level: usize,
    #[serde(default = "default_path_depth")]
    pub path_depth: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub tol: Option<f64>,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub weight_mode: WeightMode,
    pub output: Option<PathBuf>,
}

fn default_resolution() -> u32 {
    3
}

fn default_filter_level() -> u32 {
    4
}

fn default_depth() -> usize {
    4
}

fn default_path_depth() -> usize {
    6
}

fn default_steps() -> usize {
    8
}

fn default_samples() -> usize {
    1000
}

fn default_maxit() -> usize {
    solenoid_core::transfer::DEFAULT_MAXIT
}

/// A parsed config with the directory its relative references resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if config.resolution == 0 {
            bail!("resolution must be >= 1");
        }
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve<T: DeserializeOwned + Clone>(&self, r: &Option<Ref<T>>, what: &str) -> Result<Option<T>> {
        r.as_ref().map(|r| r.resolve(&self.base).with_context(|| format!("resolving {what}"))).transpose()
    }

    pub fn require<T: DeserializeOwned + Clone>(&self, r: &Option<Ref<T>>, what: &str) -> Result<T> {
        self.resolve(r, what)?.with_context(|| format!("config is missing `{what}`"))
    }
}

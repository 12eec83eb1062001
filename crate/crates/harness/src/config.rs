//! Scenario configuration files and their validation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wfprop::fields::FieldSpec;
use wfprop::quantum::{GridSpec, SpatialGrid};
use wfprop::{CoefficientField, PhasePoint};

use crate::error::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

/// A run request. Omitted keys take the scenario's defaults; keys the
/// scenario does not use are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<PhasePoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plots: Option<bool>,
}

impl ScenarioConfig {
    /// An empty request for `scenario`: every key at its default.
    pub fn named(scenario: &str) -> Self {
        Self {
            version: CONFIG_VERSION,
            scenario: scenario.into(),
            field: None,
            points: None,
            h_list: None,
            grid: None,
            tolerances: BTreeMap::new(),
            times: None,
            lambdas: None,
            samples: None,
            dt: None,
            seed: None,
            output_dir: None,
            plots: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the resolved computational content; output location and
    /// plotting do not change it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.plots = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Per-scenario defaults; `None` marks a key the scenario does not read.
#[derive(Debug, Clone, Default)]
pub struct Defaults {
    /// `Some(None)`: the field is read but the scenario supplies its own when omitted.
    pub field: Option<Option<FieldSpec>>,
    pub points: Option<Vec<PhasePoint>>,
    pub h_list: Option<Vec<f64>>,
    /// `Some(None)`: the grid is read but sized automatically when omitted.
    pub grid: Option<Option<GridSpec>>,
    pub tolerances: Vec<(&'static str, f64)>,
    pub times: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn unused(key: &str, scenario: &str) -> HarnessError {
    bad(format!("key \"{key}\" is not used by scenario {scenario}"))
}

fn merge<T: Clone>(given: &Option<T>, default: &Option<T>, key: &str, scenario: &str) -> Result<Option<T>, HarnessError> {
    match (given, default) {
        (Some(_), None) => Err(unused(key, scenario)),
        (Some(v), Some(_)) => Ok(Some(v.clone())),
        (None, d) => Ok(d.clone()),
    }
}

fn merge_optional<T: Clone>(
    given: &Option<T>,
    default: &Option<Option<T>>,
    key: &str,
    scenario: &str,
) -> Result<Option<T>, HarnessError> {
    match (given, default) {
        (Some(_), None) => Err(unused(key, scenario)),
        (Some(v), Some(_)) => Ok(Some(v.clone())),
        (None, d) => Ok(d.clone().flatten()),
    }
}

/// A validated configuration with every used key filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ScenarioConfig,
    field: Option<CoefficientField>,
    grid: Option<SpatialGrid>,
}

impl Resolved {
    pub fn new(given: &ScenarioConfig, defaults: &Defaults) -> Result<Self, HarnessError> {
        if given.version != CONFIG_VERSION {
            return Err(bad(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                given.version
            )));
        }
        let name = given.scenario.as_str();
        let mut c = ScenarioConfig::named(name);
        c.field = merge_optional(&given.field, &defaults.field, "field", name)?;
        c.points = merge(&given.points, &defaults.points, "points", name)?;
        c.h_list = merge(&given.h_list, &defaults.h_list, "h_list", name)?;
        c.times = merge(&given.times, &defaults.times, "times", name)?;
        c.lambdas = merge(&given.lambdas, &defaults.lambdas, "lambdas", name)?;
        c.samples = merge(&given.samples, &defaults.samples, "samples", name)?;
        c.dt = merge(&given.dt, &defaults.dt, "dt", name)?;
        c.seed = merge(&given.seed, &defaults.seed, "seed", name)?;
        c.grid = merge_optional(&given.grid, &defaults.grid, "grid", name)?;
        c.output_dir = given.output_dir.clone();
        c.plots = given.plots;
        for (k, v) in &given.tolerances {
            if !defaults.tolerances.iter().any(|(d, _)| d == k) {
                return Err(bad(format!("unknown tolerance \"{k}\" for scenario {name}")));
            }
            if !v.is_finite() {
                return Err(bad(format!("tolerance \"{k}\" must be finite")));
            }
        }
        c.tolerances = defaults
            .tolerances
            .iter()
            .map(|(k, v)| (k.to_string(), *given.tolerances.get(*k).unwrap_or(v)))
            .collect();

        let field = c
            .field
            .clone()
            .map(CoefficientField::try_from)
            .transpose()
            .map_err(|e| bad(format!("field: {e}")))?;
        let grid = c
            .grid
            .clone()
            .map(SpatialGrid::try_from)
            .transpose()
            .map_err(|e| bad(format!("grid: {e}")))?;
        let r = Self { config: c, field, grid };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let c = &self.config;
        let dim = self.field.as_ref().map(|f| f.dim());
        if let Some(points) = &c.points {
            if points.is_empty() {
                return Err(bad("points must not be empty"));
            }
            for p in points {
                PhasePoint::new(p.x.clone(), p.xi.clone()).map_err(|e| bad(format!("points: {e}")))?;
                if let Some(n) = dim {
                    if p.dim() != n {
                        return Err(bad(format!("point dimension {} does not match field dimension {n}", p.dim())));
                    }
                }
            }
        }
        if let (Some(g), Some(n)) = (&self.grid, dim) {
            if g.dim() != n {
                return Err(bad(format!("grid dimension {} does not match field dimension {n}", g.dim())));
            }
        }
        if let Some(hs) = &c.h_list {
            if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
                return Err(bad("h_list entries must lie in (0, 1]"));
            }
        }
        if let Some(ts) = &c.times {
            if ts.is_empty() || ts.iter().any(|t| !t.is_finite()) {
                return Err(bad("times must be finite and non-empty"));
            }
        }
        if let Some(ls) = &c.lambdas {
            if ls.len() < 2 || ls.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
                return Err(bad("lambdas needs at least two positive values"));
            }
        }
        if let Some(dt) = c.dt {
            if !(dt > 0.0 && dt <= 1e-2) {
                return Err(bad(format!("dt = {dt} must lie in (0, 1e-2]")));
            }
        }
        if c.samples == Some(0) {
            return Err(bad("samples must be positive"));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.config.scenario
    }

    pub fn field(&self) -> &CoefficientField {
        self.field.as_ref().expect("scenario declares a field")
    }

    pub fn field_opt(&self) -> Option<&CoefficientField> {
        self.field.as_ref()
    }

    pub fn grid(&self) -> Option<&SpatialGrid> {
        self.grid.as_ref()
    }

    pub fn points(&self) -> &[PhasePoint] {
        self.config.points.as_deref().expect("scenario declares points")
    }

    pub fn h_list(&self) -> &[f64] {
        self.config.h_list.as_deref().expect("scenario declares h_list")
    }

    pub fn times(&self) -> &[f64] {
        self.config.times.as_deref().expect("scenario declares times")
    }

    pub fn lambdas(&self) -> &[f64] {
        self.config.lambdas.as_deref().expect("scenario declares lambdas")
    }

    pub fn samples(&self) -> usize {
        self.config.samples.expect("scenario declares samples")
    }

    pub fn dt(&self) -> f64 {
        self.config.dt.expect("scenario declares dt")
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.expect("scenario declares seed")
    }

    pub fn tol(&self, key: &str) -> f64 {
        *self
            .config
            .tolerances
            .get(key)
            .unwrap_or_else(|| panic!("scenario declares tolerance {key}"))
    }
}

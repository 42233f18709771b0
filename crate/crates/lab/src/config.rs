//! Experiment configuration: JSON schema, validation, and the canonical
//! hash used as the cache key.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use umdlab_core::sets::PointSet;
use umdlab_core::spaces::{c, Exponent, Field, SpaceSpec};
use umdlab_core::symbols::SymbolSpec;

use crate::LabError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    IdentityCheck,
    BellmanSweep,
    CounterexampleSweep,
    PropertySuite,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::IdentityCheck => "identity_check",
            ExperimentKind::BellmanSweep => "bellman_sweep",
            ExperimentKind::CounterexampleSweep => "counterexample_sweep",
            ExperimentKind::PropertySuite => "property_suite",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    pub exponent: Exponent,
    pub field: Field,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig { dim: 1, exponent: Exponent::Finite(2.0), field: Field::Real }
    }
}

impl SpaceConfig {
    pub fn to_space(&self) -> Result<SpaceSpec, LabError> {
        SpaceSpec::new(self.dim, self.exponent, self.field)
            .map_err(|e| LabError::BadConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub resolution: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { half_width: 4.0, resolution: 201, max_iter: 400, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub witnesses: bool,
    #[serde(default)]
    pub surfaces: bool,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_d() -> usize {
    2
}

fn default_restarts() -> usize {
    16
}

fn default_budget() -> u128 {
    4096
}

/// One experiment: the set, exponents, and budgets every runner draws from.
/// Fields irrelevant to a given kind keep their defaults and are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Coefficient set as [re, im] pairs.
    #[serde(default)]
    pub coefficient_set: Vec<[f64; 2]>,
    pub p: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub depths: Vec<u32>,
    #[serde(default)]
    pub resolutions: Vec<usize>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub space: SpaceConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    /// Symbol override for direct norm estimation; the identity check
    /// always derives its quotient symbol from the coefficient set.
    #[serde(default)]
    pub symbol: Option<SymbolSpec>,
    /// Named property-suite groups to run; empty means the core instance
    /// invariants ("sets" and "martingale_instances").
    #[serde(default)]
    pub checks: Vec<String>,
    /// Enumeration cutoff for coefficient subproblems.
    #[serde(default = "default_budget")]
    pub budget: u128,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, LabError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig =
            serde_json::from_str(&body).map_err(|e| LabError::BadConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(LabError::BadConfig(format!("need p > 1, got {}", self.p)));
        }
        if self.restarts == 0 {
            return Err(LabError::BadConfig("restarts must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(LabError::BadConfig(format!("alpha must be in (0, 2], got {}", self.alpha)));
        }
        self.space.to_space()?;
        if let Some(sym) = &self.symbol {
            sym.validate_params().map_err(|e| LabError::BadConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn point_set(&self) -> Result<PointSet, LabError> {
        PointSet::new(self.coefficient_set.iter().map(|&[re, im]| c(re, im)).collect())
            .map_err(|e| LabError::BadConfig(e.to_string()))
    }

    /// Stable hash of the canonicalized config; the cache key.
    pub fn canonical_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canon = String::new();
        write_canonical(&value, &mut canon);
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    /// Short stable identifier used in report rows and output file names.
    pub fn experiment_id(&self) -> String {
        format!("{}-{}", self.kind.as_str(), self.canonical_hash())
    }
}

/// Canonical JSON: object keys sorted, default float formatting.
fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push(':');
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&serde_json::to_string(other).unwrap()),
    }
}

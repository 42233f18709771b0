//! Experiment runners. Each runner consumes an [`ExperimentConfig`] and
//! produces a [`Report`]; verdict rows encode the consistency checks that
//! gate the CLI exit code.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use umdlab_core::martingale::BetaEstimate;
use umdlab_core::sets::PointSet;
use umdlab_core::spaces::SpaceSpec;
use umdlab_core::symbols::{lattice_table, table_from_bytes, table_to_bytes, SymbolSpec};
use umdlab_core::torus::{GridField, MultiplierOperator};

use crate::config::{ExperimentConfig, ExperimentKind, SpaceConfig};
use crate::report::Report;
use crate::LabError;

mod bellman;
mod counterexample;
mod identity;
mod properties;

pub use properties::ALL_CHECKS;

/// Where artifacts (witnesses, surfaces) go when a config asks for them.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub out_dir: PathBuf,
}

impl Default for RunContext {
    fn default() -> Self {
        RunContext { out_dir: PathBuf::from("out") }
    }
}

/// Dispatch on the config kind.
pub fn run(config: &ExperimentConfig, ctx: &RunContext) -> Result<Report, LabError> {
    config.validate()?;
    match config.kind {
        ExperimentKind::IdentityCheck => identity::run_identity_check(config, ctx),
        ExperimentKind::BellmanSweep => bellman::run_bellman_sweep(config, ctx),
        ExperimentKind::CounterexampleSweep => {
            counterexample::run_counterexample_sweep(config, ctx)
        }
        ExperimentKind::PropertySuite => properties::run_property_suite(config, ctx),
    }
}

pub use bellman::run_bellman_sweep;
pub use counterexample::run_counterexample_sweep;
pub use identity::{run_identity_check, run_mult_norm};
pub use properties::run_property_suite;

pub(crate) fn require_kind(config: &ExperimentConfig, want: ExperimentKind) -> Result<(), LabError> {
    if config.kind != want {
        return Err(LabError::KindMismatch {
            got: config.kind.as_str().to_string(),
            want: want.as_str().to_string(),
        });
    }
    Ok(())
}

pub(crate) fn elapsed_ms(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

/// `p* = max(p, p/(p-1))`.
pub fn p_star(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

/// Analytic sandwich `(lower, upper)` for the transform constant of a set
/// over the scalar reference space, assembled from the quotable formulas:
/// the singleton law, the exact `max |a|` at p = 2, the real two-endpoint
/// sandwich with the sign-pair constant `p* - 1`, and the complex
/// diameter/modulus sandwich.
pub fn scalar_sandwich(set: &PointSet, p: f64) -> (f64, f64) {
    let ps1 = p_star(p) - 1.0;
    let max_mod = set.max_modulus();
    if set.len() == 1 || p == 2.0 {
        return (max_mod, max_mod);
    }
    let real = set.points().iter().all(|a| a.im == 0.0);
    if real {
        let b = set.points().iter().map(|a| a.re).fold(f64::INFINITY, f64::min);
        let big_b = set.points().iter().map(|a| a.re).fold(f64::NEG_INFINITY, f64::max);
        let lower = ((big_b - b) / 2.0 * ps1).max(b.abs()).max(big_b.abs());
        let upper = (big_b - b) / 2.0 * ps1 + (big_b + b).abs() / 2.0;
        (lower, upper)
    } else {
        let lower = (set.diameter() / std::f64::consts::PI * ps1).max(max_mod);
        let upper = max_mod * ps1;
        (lower, upper)
    }
}

// ---------------------------------------------------------------------------
// Witness files
// ---------------------------------------------------------------------------

/// Martingale witnesses serialize the whole estimate; replay recomputes the
/// achieved ratio from the stored tree and plan.
pub fn write_martingale_witness(
    dir: &std::path::Path,
    name: &str,
    estimate: &BetaEstimate,
) -> Result<PathBuf, LabError> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Io(e.to_string()))?;
    let path = dir.join(format!("{name}.witness.json"));
    std::fs::write(&path, serde_json::to_string_pretty(estimate).unwrap())
        .map_err(|e| LabError::Io(e.to_string()))?;
    Ok(path)
}

pub fn replay_martingale_witness(path: &std::path::Path) -> Result<f64, LabError> {
    let body = std::fs::read_to_string(path).map_err(|e| LabError::Io(e.to_string()))?;
    let estimate: BetaEstimate =
        serde_json::from_str(&body).map_err(|e| LabError::Io(e.to_string()))?;
    estimate.recompute().map_err(|e| LabError::runner("witness replay", e))
}

/// Header of a grid-field witness: JSON next to a flat binary of
/// little-endian (re, im) pairs in coordinate-major order, mirroring the
/// lattice-table format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldWitnessHeader {
    pub symbol: SymbolSpec,
    pub p: f64,
    pub d: usize,
    pub n: usize,
    pub space: SpaceConfig,
    pub value: f64,
}

pub fn write_field_witness(
    dir: &std::path::Path,
    name: &str,
    symbol: &SymbolSpec,
    p: f64,
    value: f64,
    witness: &GridField,
) -> Result<PathBuf, LabError> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Io(e.to_string()))?;
    let header = FieldWitnessHeader {
        symbol: symbol.clone(),
        p,
        d: witness.d,
        n: witness.n,
        space: SpaceConfig {
            dim: witness.space.dim,
            exponent: witness.space.exponent,
            field: witness.space.field,
        },
        value,
    };
    let json_path = dir.join(format!("{name}.witness.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&header).unwrap())
        .map_err(|e| LabError::Io(e.to_string()))?;
    std::fs::write(dir.join(format!("{name}.witness.bin")), table_to_bytes(witness.data()))
        .map_err(|e| LabError::Io(e.to_string()))?;
    Ok(json_path)
}

/// Recompute the achieved ratio of a stored field witness.
pub fn replay_field_witness(json_path: &std::path::Path) -> Result<f64, LabError> {
    let body = std::fs::read_to_string(json_path).map_err(|e| LabError::Io(e.to_string()))?;
    let header: FieldWitnessHeader =
        serde_json::from_str(&body).map_err(|e| LabError::Io(e.to_string()))?;
    let bin_path = json_path.with_extension("bin");
    let bytes = std::fs::read(&bin_path).map_err(|e| LabError::Io(e.to_string()))?;
    let data = table_from_bytes(&bytes);
    let space: SpaceSpec = header.space.to_space()?;
    let field = GridField::from_data(header.d, header.n, space, data)
        .map_err(|e| LabError::runner("witness replay", e))?;
    let table =
        lattice_table(&header.symbol, header.n).map_err(|e| LabError::runner("witness replay", e))?;
    let op = MultiplierOperator::new(table, space);
    let num = op.apply(&field).map_err(|e| LabError::runner("witness replay", e))?;
    Ok(num.lp_norm(header.p) / field.lp_norm(header.p))
}

//! The identity check: martingale and Fourier lower bounds for the same
//! coefficient set, compared against the quotable analytic references.

use std::time::Instant;

use serde_json::json;
use umdlab_core::martingale::{optimize_tree, CoefficientPlan, MartingaleTree, OptimizeOptions};
use umdlab_core::symbols::{lattice_table, SymbolSpec};
use umdlab_core::torus::{norm_lower_bound, GridField, MultiplierOperator, PowerOptions};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{Method, Report};
use crate::LabError;

use super::{
    elapsed_ms, p_star, require_kind, scalar_sandwich, write_field_witness,
    write_martingale_witness, RunContext,
};

pub(crate) const VERDICT_SLACK: f64 = 1e-6;

/// Martingale lower bounds over a warm-started depth chain.
pub(crate) fn martingale_chain(
    config: &ExperimentConfig,
    report: &mut Report,
    id: &str,
) -> Result<(Vec<f64>, Option<umdlab_core::martingale::BetaEstimate>), LabError> {
    let set = config.point_set()?;
    let space = config.space.to_space()?;
    let mut depths = if config.depths.is_empty() { vec![6] } else { config.depths.clone() };
    depths.sort_unstable();
    let mut warm: Option<(MartingaleTree, CoefficientPlan)> = None;
    let mut values = Vec::new();
    let mut last = None;
    for depth in depths {
        let start = Instant::now();
        let opts = OptimizeOptions {
            restarts: config.restarts,
            seed: config.seed,
            budget: config.budget,
            warm_start: warm.clone(),
            ..Default::default()
        };
        let est = optimize_tree(&set, config.p, depth, space, &opts)
            .map_err(|e| LabError::runner("martingale optimizer", e))?;
        report.push(
            id,
            "beta_lower_martingale",
            Method::Martingale,
            est.value,
            &json!({"depth": depth, "p": config.p, "restarts": config.restarts, "seed": config.seed}),
            elapsed_ms(start),
        );
        values.push(est.value);
        warm = Some((est.witness_tree.clone(), est.witness_plan.clone()));
        last = Some(est);
    }
    Ok((values, last))
}

/// Fourier-side lower bounds over a warm-started resolution chain.
pub(crate) fn fft_chain(
    config: &ExperimentConfig,
    symbol: &SymbolSpec,
    report: &mut Report,
    id: &str,
) -> Result<(Vec<f64>, Option<GridField>), LabError> {
    let space = config.space.to_space()?;
    let mut resolutions =
        if config.resolutions.is_empty() { vec![16] } else { config.resolutions.clone() };
    resolutions.sort_unstable();
    let mut prev: Option<GridField> = None;
    let mut values = Vec::new();
    for n in resolutions {
        let start = Instant::now();
        let table = lattice_table(symbol, n).map_err(|e| LabError::runner("lattice table", e))?;
        let op = MultiplierOperator::new(table, space);
        // the previous witness is embedded spectrally at this resolution
        let warm_starts = prev.as_ref().map(|w| vec![w.upsample(n)]).unwrap_or_default();
        let opts = PowerOptions {
            restarts: config.restarts,
            seed: config.seed,
            warm_starts,
            ..Default::default()
        };
        let est = norm_lower_bound(&op, config.p, &opts)
            .map_err(|e| LabError::runner("norm estimator", e))?;
        report.push(
            id,
            "tm_lower_fft",
            Method::Fft,
            est.value,
            &json!({"n": n, "p": config.p, "restarts": config.restarts, "seed": config.seed, "symbol": symbol.tag()}),
            elapsed_ms(start),
        );
        values.push(est.value);
        prev = Some(est.witness);
    }
    Ok((values, prev))
}

fn nondecreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - 1e-12)
}

/// The quotient symbol of a coefficient set: each coefficient on its own
/// axis.
pub fn quotient_symbol(config: &ExperimentConfig) -> Result<SymbolSpec, LabError> {
    let set = config.point_set()?;
    let spec = SymbolSpec::PowerQuotient {
        d: set.len(),
        alpha: config.alpha,
        a: set.points().to_vec(),
    };
    spec.validate_params().map_err(|e| LabError::BadConfig(e.to_string()))?;
    Ok(spec)
}

pub fn run_identity_check(config: &ExperimentConfig, ctx: &RunContext) -> Result<Report, LabError> {
    require_kind(config, ExperimentKind::IdentityCheck)?;
    let set = config.point_set()?;
    let id = config.experiment_id();
    let mut report = Report::default();

    let (lower, upper) = scalar_sandwich(&set, config.p);
    let params = json!({"p": config.p, "set": config.coefficient_set});
    report.push(&id, "analytic_lower", Method::Analytic, lower, &params, 0);
    report.push(&id, "analytic_upper", Method::Analytic, upper, &params, 0);
    if config.p == 2.0 {
        report.push(&id, "analytic_max_modulus", Method::Analytic, set.max_modulus(), &params, 0);
    }
    let is_sign_pair = set.len() == 2
        && set.points().iter().all(|a| a.im == 0.0 && (a.re.abs() - 1.0).abs() < 1e-12);
    if is_sign_pair {
        report.push(&id, "analytic_p_star_minus_one", Method::Analytic, p_star(config.p) - 1.0, &params, 0);
    }

    let (mart_values, mart_witness) = martingale_chain(config, &mut report, &id)?;
    let symbol = quotient_symbol(config)?;
    let (fft_values, fft_witness) = fft_chain(config, &symbol, &mut report, &id)?;

    let scalar_reference = config.space.dim == 1;
    if scalar_reference {
        report.push_verdict(
            &id,
            "martingale_le_upper",
            mart_values.iter().all(|&v| v <= upper + VERDICT_SLACK),
        );
        report.push_verdict(
            &id,
            "fft_le_upper",
            fft_values.iter().all(|&v| v <= upper + VERDICT_SLACK),
        );
    }
    report.push_verdict(&id, "martingale_nondecreasing", nondecreasing(&mart_values));
    report.push_verdict(&id, "fft_nondecreasing", nondecreasing(&fft_values));

    if config.outputs.witnesses {
        if let Some(est) = &mart_witness {
            write_martingale_witness(&ctx.out_dir, &format!("{id}-martingale"), est)?;
        }
        if let (Some(field), Some(value)) = (&fft_witness, fft_values.last()) {
            write_field_witness(&ctx.out_dir, &format!("{id}-fft"), &symbol, config.p, *value, field)?;
        }
    }
    Ok(report)
}

/// Direct norm estimation for an arbitrary symbol (or the quotient symbol
/// of the coefficient set when none is given). No verdicts: the output is
/// the lower-bound chain itself.
pub fn run_mult_norm(config: &ExperimentConfig, ctx: &RunContext) -> Result<Report, LabError> {
    let symbol = match &config.symbol {
        Some(s) => s.clone(),
        None => quotient_symbol(config)?,
    };
    let id = config.experiment_id();
    let mut report = Report::default();
    let (values, witness) = fft_chain(config, &symbol, &mut report, &id)?;
    if config.outputs.witnesses {
        if let (Some(field), Some(value)) = (&witness, values.last()) {
            write_field_witness(&ctx.out_dir, &format!("{id}-fft"), &symbol, config.p, *value, field)?;
        }
    }
    Ok(report)
}

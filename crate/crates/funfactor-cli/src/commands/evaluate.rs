//! `evaluate`: score a finished fit against the truth that generated its
//! data — support-recovery AUC, trajectory ISE, prediction-band coverage
//! and width, and the retained factor count — written as `metrics.json`
//! plus a small `table.md` in the standard results layout.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use funfactor::metrics::{
    align_components, band_coverage_width, loading_auc, mean_trajectory_ise, AlignmentMap,
    CoverageTarget, LoadingAuc, ReplicateMetrics,
};
use funfactor::postprocess::{bands_for_variable, DEFAULT_BAND_DRAWS, DEFAULT_BAND_LEVEL};
use funfactor::simulate::SimTruth;
use funfactor::{FitOutput, FitResult, MetricsError};

use crate::commands::band_seed;
use crate::error::CliError;
use crate::io;

pub const METRICS_JSON: &str = "metrics.json";
pub const TABLE_MD: &str = "table.md";

/// Everything `evaluate` measures, with the settings needed to reproduce it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Headline numbers in the standard results-table order.
    pub metrics: ReplicateMetrics,
    /// Pooled and per-factor support-recovery AUC.
    pub auc: LoadingAuc,
    /// How estimated factors were matched to truth factors.
    pub alignment: AlignmentMap,
    /// Nominal band level behind the coverage numbers.
    pub band_level: f64,
    /// Monte-Carlo draws per band.
    pub band_draws: usize,
    /// What coverage was checked against.
    pub coverage_target: CoverageTarget,
    /// Seed behind band re-sampling and coverage draws.
    pub seed: u64,
}

/// Scores the fit and writes `metrics.json` + `table.md` into `out`.
///
/// Coverage re-samples prediction bands for every (variable, subject) pair
/// from the saved variational state: one band stream per variable seeded
/// from `seed`, and fresh noisy observations (the default coverage target)
/// from `seed` itself, so results are reproducible.
pub fn run(
    output: &FitOutput,
    result: &FitResult,
    truth: &SimTruth,
    seed: u64,
    out: &Path,
) -> Result<EvaluationReport, CliError> {
    let (n, p) = (truth.n_subjects(), truth.n_variables());
    if result.metadata.n_variables != p {
        return Err(MetricsError::Mismatch {
            what: "variable count",
            fit: result.metadata.n_variables,
            truth: p,
        }
        .into());
    }
    if result.metadata.n_subjects != n {
        return Err(MetricsError::Mismatch {
            what: "subject count",
            fit: result.metadata.n_subjects,
            truth: n,
        }
        .into());
    }
    fs::create_dir_all(out).map_err(|e| CliError::at(out, e))?;

    let alignment = align_components(result, truth);
    if alignment.matches.is_empty() {
        return Err(CliError::Data(
            "the fit retained no factors, so support recovery is undefined".into(),
        ));
    }
    let auc = loading_auc(&result.inclusion_probs, &truth.support, &alignment)?;
    let ise_y = mean_trajectory_ise(result, truth)?;

    // Bands live on the fit's dense grid; truth curves must be comparable
    // on the same points. Identical sizes mean identical uniform grids.
    if result.dense_grid.len() != truth.grid.len() {
        return Err(MetricsError::GridMismatch(result.dense_grid.len(), truth.grid.len()).into());
    }
    let subjects: Vec<usize> = (0..n).collect();
    let mut bands = Vec::with_capacity(p * n);
    let mut signals = Vec::with_capacity(p * n);
    for j in 0..p {
        bands.extend(bands_for_variable(
            &output.state,
            &output.basis,
            j,
            &subjects,
            &result.dense_grid,
            DEFAULT_BAND_LEVEL,
            DEFAULT_BAND_DRAWS,
            band_seed(seed, j),
        ));
        for &i in &subjects {
            signals.push(truth.signal_on_grid(i, j));
        }
    }
    let coverage_target = CoverageTarget::NoisyDraws { seed };
    let (coverage, width) = band_coverage_width(&bands, &signals, truth.noise_sd, coverage_target)?;

    let report = EvaluationReport {
        metrics: ReplicateMetrics {
            auc: auc.pooled,
            ise_y,
            coverage,
            width,
            retained_factors: result.factors.len() as f64,
        },
        auc,
        alignment,
        band_level: DEFAULT_BAND_LEVEL,
        band_draws: DEFAULT_BAND_DRAWS,
        coverage_target,
        seed,
    };
    io::write_json(&out.join(METRICS_JSON), &report)?;
    io::write_text(&out.join(TABLE_MD), &single_run_table(&report.metrics))?;
    Ok(report)
}

/// The standard results table for a single run: same metric rows as the
/// replicate report, one value column.
fn single_run_table(m: &ReplicateMetrics) -> String {
    let mut out = String::new();
    out.push_str("| Metric | Value |\n| --- | --- |\n");
    out.push_str(&format!("| AUC | {:.3} |\n", m.auc));
    out.push_str(&format!("| ISE y | {:.3} |\n", m.ise_y));
    out.push_str(&format!("| Coverage (%) | {:.3} |\n", m.coverage));
    out.push_str(&format!("| Width | {:.3} |\n", m.width));
    out.push_str(&format!("| Retained factors | {:.3} |\n", m.retained_factors));
    out
}

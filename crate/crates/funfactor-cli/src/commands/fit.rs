//! `fit`: run annealed inference on a dataset and write every artifact the
//! model produces — the post-processed report, the raw variational state
//! (for later band re-sampling), the optimization trace, and flat CSV views
//! of scores, eigenfunctions, and loadings.

use std::fs;
use std::path::Path;

use funfactor::data::Hyperparameters;
use funfactor::postprocess::{bands_for_variable, DEFAULT_BAND_DRAWS, DEFAULT_BAND_LEVEL};
use funfactor::{fit, summarize_fit, FitOutput, FitResult, LongitudinalDataset};

use crate::commands::band_seed;
use crate::error::CliError;
use crate::io::{self, csv_writer, fmt_f64, variable_names};

pub const FIT_JSON: &str = "fit.json";
pub const STATE_JSON: &str = "state.json";
pub const ELBO_TRACE_CSV: &str = "elbo_trace.csv";

/// Runs the fit inside a worker pool of the requested size (the process
/// default pool when `threads` is `None`) and writes all artifacts into
/// `out`. Results do not depend on the thread count.
pub fn run(
    data: &LongitudinalDataset,
    hyper: &Hyperparameters,
    bands: &[(usize, usize)],
    threads: Option<usize>,
    out: &Path,
) -> Result<(FitOutput, FitResult), CliError> {
    match threads {
        None => run_inner(data, hyper, bands, out),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Config(format!("cannot build a {k}-thread pool: {e}")))?;
            pool.install(|| run_inner(data, hyper, bands, out))
        }
    }
}

fn run_inner(
    data: &LongitudinalDataset,
    hyper: &Hyperparameters,
    bands: &[(usize, usize)],
    out: &Path,
) -> Result<(FitOutput, FitResult), CliError> {
    for &(j, i) in bands {
        if j >= data.p || i >= data.n_subjects() {
            return Err(CliError::Config(format!(
                "--bands {j},{i} is out of range: the dataset has {} variables and {} subjects \
                 (indices are zero-based)",
                data.p,
                data.n_subjects()
            )));
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::at(out, e))?;

    let output = fit(data, hyper)?;
    let result = summarize_fit(&output)?;

    io::write_json(&out.join(FIT_JSON), &result)?;
    io::write_json(&out.join(STATE_JSON), &output)?;
    write_elbo_trace(&out.join(ELBO_TRACE_CSV), &output)?;
    write_scores(&out.join("scores.csv"), data, &result)?;
    write_eigenfunctions(&out.join("eigenfunctions.csv"), &result)?;
    write_loadings(&out.join("loadings.csv"), data, &result)?;
    for &(j, i) in bands {
        write_band(out, &output, &result, j, i, hyper.seed)?;
    }
    Ok((output, result))
}

/// One row per sweep: counter, temperature, the ordinary (temperature-1)
/// bound for the state after the sweep, and wall-clock seconds. Everything
/// except `seconds` is deterministic for a given seed and config.
fn write_elbo_trace(path: &Path, output: &FitOutput) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["sweep", "T", "elbo", "seconds"])
        .map_err(|e| CliError::at(path, e))?;
    for r in &output.trace.records {
        w.write_record([
            r.sweep.to_string(),
            fmt_f64(r.temperature),
            fmt_f64(r.unheated),
            format!("{:.3}", r.seconds),
        ])
        .map_err(|e| CliError::at(path, e))?;
    }
    w.flush().map_err(|e| CliError::at(path, e))
}

/// Rotated scores of every retained factor: all `l_max` components per
/// subject, ordered by the variance they carry (see `pve` in `fit.json`).
fn write_scores(path: &Path, data: &LongitudinalDataset, result: &FitResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["factor", "subject_id", "component", "score"])
        .map_err(|e| CliError::at(path, e))?;
    for factor in &result.factors {
        for (i, subject) in data.subjects.iter().enumerate() {
            for (l, score) in factor.scores[i].iter().enumerate() {
                w.write_record([
                    factor.factor.to_string(),
                    subject.subject_id.clone(),
                    l.to_string(),
                    fmt_f64(*score),
                ])
                .map_err(|e| CliError::at(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::at(path, e))
}

/// Grid-sampled eigenfunctions of every retained factor.
fn write_eigenfunctions(path: &Path, result: &FitResult) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record(["factor", "component", "t", "value"])
        .map_err(|e| CliError::at(path, e))?;
    for factor in &result.factors {
        for (l, curve) in factor.eigenfunctions.iter().enumerate() {
            for (t, value) in result.dense_grid.iter().zip(curve) {
                w.write_record([
                    factor.factor.to_string(),
                    l.to_string(),
                    fmt_f64(*t),
                    fmt_f64(*value),
                ])
                .map_err(|e| CliError::at(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| CliError::at(path, e))
}

/// Posterior inclusion probability and mean loading for every
/// (variable, factor) pair, retained or not.
fn write_loadings(path: &Path, data: &LongitudinalDataset, result: &FitResult) -> Result<(), CliError> {
    let names = variable_names(data);
    let mut w = csv_writer(path)?;
    w.write_record(["variable", "factor", "gamma_star", "e_b"])
        .map_err(|e| CliError::at(path, e))?;
    for (j, name) in names.iter().enumerate() {
        for q in 0..result.inclusion_probs[j].len() {
            w.write_record([
                name.clone(),
                q.to_string(),
                fmt_f64(result.inclusion_probs[j][q]),
                fmt_f64(result.loading_means[j][q]),
            ])
            .map_err(|e| CliError::at(path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::at(path, e))
}

/// Prediction band for one requested (variable, subject) pair, written as
/// `bands_<j>_<i>.csv`. The band stream is seeded from the fit seed and the
/// variable index, so `evaluate` reproduces the same band for the same seed.
fn write_band(
    out: &Path,
    output: &FitOutput,
    result: &FitResult,
    j: usize,
    i: usize,
    seed: u64,
) -> Result<(), CliError> {
    let band = bands_for_variable(
        &output.state,
        &output.basis,
        j,
        &[i],
        &result.dense_grid,
        DEFAULT_BAND_LEVEL,
        DEFAULT_BAND_DRAWS,
        band_seed(seed, j),
    )
    .pop()
    .expect("one subject requested");
    let path = out.join(format!("bands_{j}_{i}.csv"));
    let mut w = csv_writer(&path)?;
    w.write_record(["t", "mean", "lower", "upper"])
        .map_err(|e| CliError::at(&path, e))?;
    for (((t, mean), lower), upper) in band
        .grid
        .iter()
        .zip(&band.mean)
        .zip(&band.lower)
        .zip(&band.upper)
    {
        w.write_record([fmt_f64(*t), fmt_f64(*mean), fmt_f64(*lower), fmt_f64(*upper)])
            .map_err(|e| CliError::at(&path, e))?;
    }
    w.flush().map_err(|e| CliError::at(&path, e))
}

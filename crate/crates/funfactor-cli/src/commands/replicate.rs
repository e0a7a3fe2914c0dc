//! `replicate`: the full simulate → fit → evaluate chain, repeated with
//! derived seeds in a bounded worker pool and aggregated into the standard
//! results table. Failed replicates are recorded, tolerated up to a share
//! of the total, and never poison the aggregate.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use funfactor::metrics::{aggregate_replicates, ReplicateMetrics};

use crate::commands::{evaluate, fit, simulate};
use crate::config::{fingerprint, ConfigLock, RunConfig};
use crate::error::CliError;
use crate::io::{self, csv_writer, fmt_f64};

pub const REPLICATES_CSV: &str = "replicates.csv";
pub const REPORT_MD: &str = "report.md";

/// Salt separating evaluation streams from simulation streams, which are
/// keyed by the base seed plus the replicate index directly.
const EVAL_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// How a replicate study runs; counts come pre-validated from the caller.
#[derive(Debug, Clone, Copy)]
pub struct ReplicateOptions {
    /// Number of replicates, at least 2.
    pub count: usize,
    /// Replicates running at once.
    pub workers: usize,
    /// Reuse replicate directories that already contain metrics.
    pub resume: bool,
    /// Within-fit thread budget (composes with `workers`).
    pub threads: Option<usize>,
}

struct RepOutcome {
    replicate: usize,
    seed: u64,
    result: Result<ReplicateMetrics, String>,
}

/// Runs the study under `out`, one `rep_XXXX` directory per replicate with
/// the full artifact chain, then writes `replicates.csv` and `report.md`.
/// Fails with the partial-failure exit code when more than a fifth of the
/// replicates failed; artifacts are written either way.
pub fn run(base: &RunConfig, opts: &ReplicateOptions, out: &Path) -> Result<(), CliError> {
    let base_seed = base.require_simulate()?.seed;
    fs::create_dir_all(out).map_err(|e| CliError::at(out, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| {
            CliError::Config(format!("cannot build a {}-worker pool: {e}", opts.workers))
        })?;
    let outcomes: Vec<RepOutcome> = pool.install(|| {
        (0..opts.count)
            .into_par_iter()
            .map(|r| run_one(base, opts, out, r, base_seed))
            .collect()
    });

    write_replicates_csv(&out.join(REPLICATES_CSV), &outcomes)?;
    let successes: Vec<ReplicateMetrics> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().copied())
        .collect();
    let fp = fingerprint(base);
    io::write_text(
        &out.join(REPORT_MD),
        &render_report(opts.count, &successes, &fp),
    )?;

    let failed = opts.count - successes.len();
    if failed * 5 > opts.count {
        return Err(CliError::Partial(format!(
            "{failed} of {} replicates failed; see {} for details",
            opts.count, REPLICATES_CSV
        )));
    }
    Ok(())
}

/// Evaluation seed for replicate `r`: salted away from every simulation
/// seed and spaced 2^32 apart so per-variable band streams (seed + 1 + j)
/// never reuse a key between replicates.
fn eval_seed(base_seed: u64, r: usize) -> u64 {
    (base_seed ^ EVAL_SEED_SALT).wrapping_add((r as u64) << 32)
}

fn run_one(
    base: &RunConfig,
    opts: &ReplicateOptions,
    out: &Path,
    r: usize,
    base_seed: u64,
) -> RepOutcome {
    let seed = base_seed.wrapping_add(r as u64);
    let dir = out.join(format!("rep_{r:04}"));

    if opts.resume {
        let metrics_path = dir.join(evaluate::METRICS_JSON);
        if metrics_path.exists() {
            match io::read_json::<evaluate::EvaluationReport>(&metrics_path) {
                Ok(report) => {
                    eprintln!("replicate {r}: reusing completed directory");
                    return RepOutcome {
                        replicate: r,
                        seed,
                        result: Ok(report.metrics),
                    };
                }
                // An unreadable metrics file means the replicate did not
                // really complete; fall through and redo it.
                Err(e) => eprintln!("replicate {r}: rerunning, metrics unreadable ({e})"),
            }
        }
    }

    let result = run_fresh(base, opts, &dir, r, seed);
    match &result {
        Ok(m) => eprintln!(
            "replicate {r}: ok (auc {:.3}, ise {:.3}, coverage {:.1}%, retained {})",
            m.auc, m.ise_y, m.coverage, m.retained_factors
        ),
        Err(e) => eprintln!("replicate {r}: failed: {e}"),
    }
    RepOutcome {
        replicate: r,
        seed,
        result: result.map_err(|e| e.to_string()),
    }
}

fn run_fresh(
    base: &RunConfig,
    opts: &ReplicateOptions,
    dir: &Path,
    r: usize,
    seed: u64,
) -> Result<ReplicateMetrics, CliError> {
    let mut derived = base.clone();
    derived
        .simulate
        .as_mut()
        .expect("caller checked the simulate section")
        .seed = seed;
    fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))?;
    ConfigLock::new("replicate", derived.clone()).write(dir)?;

    let sim = derived.simulate.as_ref().expect("present");
    let (data, truth) = simulate::run(sim, dir)?;
    let (output, result) = fit::run(&data, &derived.fit, &[], opts.threads, dir)?;
    let base_seed = base.simulate.as_ref().expect("present").seed;
    let report = evaluate::run(&output, &result, &truth, eval_seed(base_seed, r), dir)?;
    Ok(report.metrics)
}

fn write_replicates_csv(path: &Path, outcomes: &[RepOutcome]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "replicate",
        "seed",
        "status",
        "auc",
        "ise_y",
        "coverage",
        "width",
        "retained_factors",
        "error",
    ])
    .map_err(|e| CliError::at(path, e))?;
    for o in outcomes {
        let record = match &o.result {
            Ok(m) => [
                o.replicate.to_string(),
                o.seed.to_string(),
                "ok".into(),
                fmt_f64(m.auc),
                fmt_f64(m.ise_y),
                fmt_f64(m.coverage),
                fmt_f64(m.width),
                fmt_f64(m.retained_factors),
                String::new(),
            ],
            Err(e) => [
                o.replicate.to_string(),
                o.seed.to_string(),
                "failed".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.clone(),
            ],
        };
        w.write_record(&record).map_err(|e| CliError::at(path, e))?;
    }
    w.flush().map_err(|e| CliError::at(path, e))
}

fn render_report(count: usize, successes: &[ReplicateMetrics], fp: &str) -> String {
    let mut out = String::from("# Replicate study\n\n");
    out.push_str(&format!("- replicates requested: {count}\n"));
    out.push_str(&format!(
        "- succeeded: {}, failed: {}\n",
        successes.len(),
        count - successes.len()
    ));
    out.push_str(&format!("- config fingerprint: `{fp}`\n\n"));
    if successes.len() >= 2 {
        out.push_str(&aggregate_replicates(successes, fp).to_markdown());
    } else {
        out.push_str("Too few successful replicates to aggregate; see replicates.csv.\n");
    }
    out
}

//! Run configuration: one JSON document drives every subcommand, and every
//! run directory receives a lock file with the fully resolved settings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use funfactor::data::Hyperparameters;
use funfactor::rng::RNG_ALGORITHM;
use funfactor::simulate::SimConfig;

use crate::error::CliError;

/// Config document format this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

/// Name of the resolved-settings file written into each run directory.
pub const LOCK_FILE: &str = "config.lock.json";

/// The single run document. Sections a subcommand does not use may be
/// omitted; missing fit fields take the model defaults. Unknown keys
/// anywhere are rejected so typos cannot silently revert to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Synthetic-data settings; required by `simulate` and `replicate`.
    #[serde(default)]
    pub simulate: Option<SimConfig>,
    /// Priors and fitting controls.
    #[serde(default)]
    pub fit: Hyperparameters,
    /// Replicate-study settings; `replicate` reads them unless flags override.
    #[serde(default)]
    pub replicate: Option<ReplicateSettings>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            simulate: None,
            fit: Hyperparameters::default(),
            replicate: None,
        }
    }
}

impl RunConfig {
    /// The simulate section, or a config error telling the user to add one.
    pub fn require_simulate(&self) -> Result<&SimConfig, CliError> {
        self.simulate.as_ref().ok_or_else(|| {
            CliError::Config("config has no `simulate` section, which this command needs".into())
        })
    }
}

fn default_workers() -> usize {
    1
}

/// How many replicates to run and how many to run at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplicateSettings {
    /// Number of replicates; at least 2.
    pub count: usize,
    /// Parallel replicate workers (each may itself use `--threads` cores).
    #[serde(default = "default_workers")]
    pub workers: usize,
}

/// Reads and checks a run config. Parse failures surface serde_json's
/// diagnostics, which name the offending field and its line/column.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "{}: schema_version {} is not supported; this build reads version {}",
            path.display(),
            config.schema_version,
            SCHEMA_VERSION
        )));
    }
    if let Some(sim) = &config.simulate {
        sim.validate()?;
    }
    Ok(config)
}

/// Checks the fit section for values the model cannot run with, so broken
/// settings fail with a config diagnostic instead of deep inside the fit.
/// Schedule details (levels, `t_max` range) are checked by the model itself
/// and surface as config errors through the error mapping.
pub fn validate_fit_settings(fit: &Hyperparameters) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Config(format!("fit settings: {msg}")));
    if fit.q_max == 0 {
        return bad("q_max must be at least 1".into());
    }
    if fit.l_max == 0 {
        return bad("l_max must be at least 1".into());
    }
    if !(fit.tol > 0.0 && fit.tol.is_finite()) {
        return bad(format!("tol must be a positive number, got {}", fit.tol));
    }
    if fit.max_iter == 0 {
        return bad("max_iter must be at least 1".into());
    }
    if fit.sweeps_per_temperature == 0 {
        return bad("sweeps_per_temperature must be at least 1".into());
    }
    if fit.dense_grid_size < 2 {
        return bad(format!(
            "dense_grid_size must be at least 2, got {}",
            fit.dense_grid_size
        ));
    }
    if !(fit.half_cauchy_scale > 0.0 && fit.half_cauchy_scale.is_finite()) {
        return bad(format!(
            "half_cauchy_scale must be a positive number, got {}",
            fit.half_cauchy_scale
        ));
    }
    if !(fit.sigma_beta > 0.0 && fit.sigma_beta.is_finite()) {
        return bad(format!(
            "sigma_beta must be a positive number, got {}",
            fit.sigma_beta
        ));
    }
    if let Some((a, b)) = fit.omega_prior {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return bad(format!("omega_prior must be positive, got ({a}, {b})"));
        }
    }
    Ok(())
}

/// SHA-256 of the config's compact JSON serialization, in lowercase hex.
/// Struct field order is fixed, so equal configs fingerprint equally.
/// Execution-only fields (the replicate worker count) are normalized before
/// hashing: parallelism does not change what a run computes, so it must not
/// change the run's identity either.
pub fn fingerprint(config: &RunConfig) -> String {
    let mut normalized = config.clone();
    if let Some(rep) = &mut normalized.replicate {
        rep.workers = 1;
    }
    let bytes = serde_json::to_vec(&normalized).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Audit record written next to every run's outputs: which command ran,
/// the exact configuration it resolved to (defaults filled, command-line
/// overrides applied), the random generator identity, and a fingerprint
/// for cheap equality checks between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigLock {
    pub schema_version: u32,
    /// Subcommand that produced this directory.
    pub command: String,
    /// Generator behind every random stream in the run.
    pub rng_algorithm: String,
    /// Fully resolved configuration the run actually used.
    pub config: RunConfig,
    /// [`fingerprint`] of `config`.
    pub fingerprint: String,
}

impl ConfigLock {
    pub fn new(command: &str, config: RunConfig) -> Self {
        let fingerprint = fingerprint(&config);
        ConfigLock {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            config,
            fingerprint,
        }
    }

    /// Writes `config.lock.json` into the run directory.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        crate::io::write_json(&dir.join(LOCK_FILE), self)
    }
}

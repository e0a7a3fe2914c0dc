//! Argument parsing and dispatch. Each subcommand resolves its settings
//! (config file, then flags, then environment), writes a lock file with the
//! result, and hands off to the command body.

use std::env;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use funfactor::data::{Hyperparameters, ScheduleKind};
use funfactor::simulate::SimTruth;
use funfactor::{FitOutput, FitResult};

use crate::commands::{evaluate, fit as fit_cmd, replicate, simulate as simulate_cmd};
use crate::config::{self, load_config, ConfigLock, ReplicateSettings, RunConfig};
use crate::error::CliError;
use crate::io;

/// Environment variable consulted when `--threads` is not given.
pub const THREADS_ENV: &str = "FUNFACTOR_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "funfactor",
    version,
    about = "Sparse functional factor models: simulate, fit, evaluate, replicate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known truth
    Simulate {
        /// Run config (JSON) with a `simulate` section
        #[arg(long)]
        config: PathBuf,
        /// Directory for data.csv, truth.json, config.lock.json
        #[arg(long)]
        out: PathBuf,
        /// Override the config's simulation seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the model to a long-format CSV dataset
    Fit {
        /// Observations as subject_id,time,variable,value rows
        data: PathBuf,
        /// Run config (JSON); model defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for fit.json, state.json, trace and CSV artifacts
        #[arg(long)]
        out: PathBuf,
        /// Override the fit seed (initialization and band sampling)
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: FitOverrides,
        /// Also write a prediction band for VARIABLE,SUBJECT
        /// (zero-based indices; repeatable)
        #[arg(long, value_name = "J,I")]
        bands: Vec<BandRequest>,
    },
    /// Score a fit directory against the truth that generated its data
    Evaluate {
        /// Directory holding fit.json and state.json
        fit_dir: PathBuf,
        /// truth.json from the matching simulate run
        truth: PathBuf,
        /// Directory for metrics.json and table.md
        #[arg(long)]
        out: PathBuf,
        /// Seed for band re-sampling and coverage draws
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run simulate -> fit -> evaluate repeatedly and aggregate the metrics
    Replicate {
        /// Run config (JSON) with a `simulate` section
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving one rep_XXXX directory per replicate
        #[arg(long)]
        out: PathBuf,
        /// Number of replicates, at least 2 (default: replicate.count)
        #[arg(long)]
        replicates: Option<usize>,
        /// Replicates to run at once (default: replicate.workers, then 1)
        #[arg(long)]
        workers: Option<usize>,
        /// Reuse replicate directories that already contain metrics.json
        #[arg(long)]
        resume: bool,
        /// Override the study's base simulation seed
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        overrides: FitOverrides,
    },
}

/// One `--bands variable,subject` request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandRequest {
    pub variable: usize,
    pub subject: usize,
}

impl FromStr for BandRequest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (j, i) = s
            .split_once(',')
            .ok_or_else(|| format!("expected `variable,subject` indices, got `{s}`"))?;
        let parse = |part: &str, what: &str| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad {what} index `{part}`: {e}"))
        };
        Ok(BandRequest {
            variable: parse(j, "variable")?,
            subject: parse(i, "subject")?,
        })
    }
}

/// Cooling-path shape accepted by `--schedule`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Geometric,
    Harmonic,
    Linear,
}

impl From<ScheduleArg> for ScheduleKind {
    fn from(arg: ScheduleArg) -> Self {
        match arg {
            ScheduleArg::Geometric => ScheduleKind::Geometric,
            ScheduleArg::Harmonic => ScheduleKind::Harmonic,
            ScheduleArg::Linear => ScheduleKind::Linear,
        }
    }
}

/// Tuning flags layered on top of the config file.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct FitOverrides {
    /// Worker threads inside a fit (default: FUNFACTOR_THREADS, then all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Annealing levels including the final T = 1; 1 disables annealing
    #[arg(long)]
    pub levels: Option<usize>,
    /// Starting temperature, strictly between 1 and 2
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Cooling-path shape
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    /// Maximum number of factors fitted
    #[arg(long)]
    pub qmax: Option<usize>,
    /// Components per factor
    #[arg(long)]
    pub lmax: Option<usize>,
    /// Relative tolerance ending the final constant-temperature loop
    #[arg(long)]
    pub tol: Option<f64>,
}

impl FitOverrides {
    /// Applies the flags on top of resolved settings.
    pub fn apply(&self, fit: &mut Hyperparameters) {
        if let Some(v) = self.levels {
            fit.schedule.levels = v;
        }
        if let Some(v) = self.tmax {
            fit.schedule.t_max = v;
        }
        if let Some(v) = self.schedule {
            fit.schedule.kind = v.into();
        }
        if let Some(v) = self.qmax {
            fit.q_max = v;
        }
        if let Some(v) = self.lmax {
            fit.l_max = v;
        }
        if let Some(v) = self.tol {
            fit.tol = v;
        }
    }

    /// Thread budget: the flag first, then the environment variable.
    /// `None` leaves the process-wide default pool in charge.
    pub fn resolve_threads(&self) -> Result<Option<usize>, CliError> {
        let threads = match self.threads {
            Some(k) => Some(k),
            None => match env::var(THREADS_ENV) {
                Ok(text) => Some(text.trim().parse::<usize>().map_err(|e| {
                    CliError::Config(format!("{THREADS_ENV}=`{text}` is not a thread count: {e}"))
                })?),
                Err(env::VarError::NotPresent) => None,
                Err(e) => return Err(CliError::Config(format!("{THREADS_ENV}: {e}"))),
            },
        };
        if threads == Some(0) {
            return Err(CliError::Config("thread count must be at least 1".into()));
        }
        Ok(threads)
    }
}

/// Executes a parsed command line; the caller turns the error class into a
/// process exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut run_config = load_config(&config)?;
            run_config.require_simulate()?;
            if let Some(s) = seed {
                run_config.simulate.as_mut().expect("checked").seed = s;
            }
            fs::create_dir_all(&out).map_err(|e| CliError::at(&out, e))?;
            ConfigLock::new("simulate", run_config.clone()).write(&out)?;
            simulate_cmd::run(run_config.simulate.as_ref().expect("checked"), &out)?;
            Ok(())
        }
        Command::Fit {
            data,
            config,
            out,
            seed,
            overrides,
            bands,
        } => {
            let mut run_config = match &config {
                Some(path) => load_config(path)?,
                None => RunConfig::default(),
            };
            overrides.apply(&mut run_config.fit);
            if let Some(s) = seed {
                run_config.fit.seed = s;
            }
            config::validate_fit_settings(&run_config.fit)?;
            let threads = overrides.resolve_threads()?;
            let dataset = io::read_long_csv(&data)?;
            fs::create_dir_all(&out).map_err(|e| CliError::at(&out, e))?;
            ConfigLock::new("fit", run_config.clone()).write(&out)?;
            let pairs: Vec<(usize, usize)> =
                bands.iter().map(|b| (b.variable, b.subject)).collect();
            fit_cmd::run(&dataset, &run_config.fit, &pairs, threads, &out)?;
            Ok(())
        }
        Command::Evaluate {
            fit_dir,
            truth,
            out,
            seed,
        } => {
            let result: FitResult = io::read_json(&fit_dir.join(fit_cmd::FIT_JSON))?;
            let output: FitOutput = io::read_json(&fit_dir.join(fit_cmd::STATE_JSON))?;
            let sim_truth: SimTruth = io::read_json(&truth)?;
            fs::create_dir_all(&out).map_err(|e| CliError::at(&out, e))?;
            let lock_config = RunConfig {
                fit: output.hyper.clone(),
                ..RunConfig::default()
            };
            ConfigLock::new("evaluate", lock_config).write(&out)?;
            evaluate::run(&output, &result, &sim_truth, seed, &out)?;
            Ok(())
        }
        Command::Replicate {
            config,
            out,
            replicates,
            workers,
            resume,
            seed,
            overrides,
        } => {
            let mut run_config = load_config(&config)?;
            run_config.require_simulate()?;
            if let Some(s) = seed {
                run_config.simulate.as_mut().expect("checked").seed = s;
            }
            overrides.apply(&mut run_config.fit);
            config::validate_fit_settings(&run_config.fit)?;
            let threads = overrides.resolve_threads()?;
            let settings = resolve_replicates(&run_config, replicates, workers)?;
            run_config.replicate = Some(settings);
            fs::create_dir_all(&out).map_err(|e| CliError::at(&out, e))?;
            ConfigLock::new("replicate", run_config.clone()).write(&out)?;
            let opts = replicate::ReplicateOptions {
                count: settings.count,
                workers: settings.workers,
                resume,
                threads,
            };
            replicate::run(&run_config, &opts, &out)
        }
    }
}

/// Replicate count and worker pool size: flags first, then the config's
/// replicate section.
fn resolve_replicates(
    config: &RunConfig,
    replicates: Option<usize>,
    workers: Option<usize>,
) -> Result<ReplicateSettings, CliError> {
    let count = replicates
        .or(config.replicate.map(|r| r.count))
        .ok_or_else(|| {
            CliError::Config(
                "replicate count missing: pass --replicates or set replicate.count".into(),
            )
        })?;
    if count < 2 {
        return Err(CliError::Config(format!(
            "a replicate study needs at least 2 replicates, got {count}"
        )));
    }
    let workers = workers
        .or(config.replicate.map(|r| r.workers))
        .unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    Ok(ReplicateSettings { count, workers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_requests_parse_and_reject() {
        assert_eq!(
            "3,12".parse::<BandRequest>().unwrap(),
            BandRequest {
                variable: 3,
                subject: 12
            }
        );
        assert_eq!(
            " 0 , 1 ".parse::<BandRequest>().unwrap(),
            BandRequest {
                variable: 0,
                subject: 1
            }
        );
        assert!("3".parse::<BandRequest>().is_err());
        assert!("a,b".parse::<BandRequest>().is_err());
        assert!("1,-2".parse::<BandRequest>().is_err());
    }

    #[test]
    fn cli_shape_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn overrides_apply_on_top_of_defaults() {
        let flags = FitOverrides {
            levels: Some(1),
            qmax: Some(3),
            tol: Some(1e-4),
            schedule: Some(ScheduleArg::Linear),
            ..FitOverrides::default()
        };
        let mut fit = Hyperparameters::default();
        flags.apply(&mut fit);
        assert_eq!(fit.schedule.levels, 1);
        assert_eq!(fit.schedule.kind, ScheduleKind::Linear);
        assert_eq!(fit.q_max, 3);
        assert_eq!(fit.tol, 1e-4);
        assert_eq!(fit.l_max, Hyperparameters::default().l_max);
    }
}

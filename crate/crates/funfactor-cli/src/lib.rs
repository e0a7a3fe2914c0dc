//! Command-line front end for the sparse functional factor model:
//! reproducible simulate / fit / evaluate / replicate runs bound together
//! by plain on-disk artifacts.
//!
//! Every run owns one output directory holding a `config.lock.json` with
//! the fully resolved settings (defaults filled, flags applied) and the
//! generator identity, so any result can be traced back to exactly what
//! produced it. Observations travel as long-format CSV with full-precision
//! floats; model output is JSON plus flat CSV views. Exit codes separate
//! configuration (2), data (3), numerical (4), and partial-replicate (5)
//! failures.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use cli::{run, Cli};
pub use error::CliError;

//! `simulate`: draw one synthetic dataset and write it with its truth.

use std::fs;
use std::path::Path;

use funfactor::simulate::{generate_dataset, SimConfig, SimTruth};
use funfactor::LongitudinalDataset;

use crate::error::CliError;
use crate::io;

/// Generates a dataset and writes `data.csv` (long format) and
/// `truth.json` into `out`. Rerunning with the same config produces
/// byte-identical files.
pub fn run(cfg: &SimConfig, out: &Path) -> Result<(LongitudinalDataset, SimTruth), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::at(out, e))?;
    let (data, truth) = generate_dataset(cfg)?;
    io::write_long_csv(&out.join("data.csv"), &data)?;
    io::write_json(&out.join("truth.json"), &truth)?;
    Ok((data, truth))
}

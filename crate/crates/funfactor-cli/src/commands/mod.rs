//! The four subcommand bodies. Each takes already-resolved inputs, writes
//! its artifacts into one run directory, and returns what later stages need,
//! so `replicate` can chain them without re-reading files.

pub mod evaluate;
pub mod fit;
pub mod replicate;
pub mod simulate;

/// Seed for the band stream of variable `j`, offset from the run seed so
/// every variable samples an independent stream and none collides with the
/// stream drawing coverage noise (which uses the run seed itself).
pub fn band_seed(base: u64, j: usize) -> u64 {
    base.wrapping_add(1).wrapping_add(j as u64)
}

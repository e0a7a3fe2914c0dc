//! Dataset containers, validation, and model hyperparameters.
//!
//! Observation times are rescaled once, up front, to the unit interval; the
//! affine map used is recorded on the dataset so callers can translate grid
//! output back to the original time axis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// One subject's observations: `times.len()` rows, one column per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub subject_id: String,
    /// Observation times; irregular and subject-specific, duplicates allowed.
    pub times: Vec<f64>,
    /// `n_i x p` matrix of observed values, rows aligned with `times`.
    pub values: DMatrix<f64>,
}

/// Affine rescaling `t -> (t - offset) * scale` taking raw times into [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTimeMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineTimeMap {
    pub fn identity() -> Self {
        AffineTimeMap {
            offset: 0.0,
            scale: 1.0,
        }
    }

    pub fn apply(&self, t: f64) -> f64 {
        (t - self.offset) * self.scale
    }

    /// Inverse map, taking rescaled times back to the original axis.
    pub fn invert(&self, u: f64) -> f64 {
        u / self.scale + self.offset
    }
}

/// Validated longitudinal dataset with times in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    pub subjects: Vec<SubjectRecord>,
    /// Number of variables (columns of every subject's value matrix).
    pub p: usize,
    /// Optional variable names of length `p`; defaults are synthesized by I/O layers.
    pub variable_names: Option<Vec<String>>,
    /// Map from original to rescaled times (identity if the data arrived in [0, 1]).
    pub time_map: AffineTimeMap,
}

impl LongitudinalDataset {
    /// Wraps raw subjects without validating; `validate_dataset` finishes the job.
    pub fn new(
        subjects: Vec<SubjectRecord>,
        p: usize,
        variable_names: Option<Vec<String>>,
    ) -> Self {
        LongitudinalDataset {
            subjects,
            p,
            variable_names,
            time_map: AffineTimeMap::identity(),
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn total_obs(&self) -> usize {
        self.subjects.iter().map(|s| s.times.len()).sum()
    }

    /// All observation times pooled across subjects, in subject order.
    pub fn pooled_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_obs());
        for s in &self.subjects {
            out.extend_from_slice(&s.times);
        }
        out
    }
}

/// Checks shapes and finiteness, then rescales times to [0, 1].
///
/// Requires at least two subjects and at least one observation per subject.
/// If all times already lie in [0, 1] they are left untouched (so the
/// function is idempotent); otherwise times are mapped affinely onto [0, 1]
/// and the map is recorded in `time_map`, composed with any map already
/// present.
pub fn validate_dataset(mut data: LongitudinalDataset) -> Result<LongitudinalDataset, DataError> {
    if data.subjects.len() < 2 {
        return Err(DataError::TooFewSubjects(data.subjects.len()));
    }
    if let Some(names) = &data.variable_names {
        if names.len() != data.p {
            return Err(DataError::VariableNameMismatch {
                got: names.len(),
                p: data.p,
            });
        }
    }
    for s in &data.subjects {
        if s.times.is_empty() {
            return Err(DataError::EmptySubject {
                subject: s.subject_id.clone(),
            });
        }
        if s.values.nrows() != s.times.len() || s.values.ncols() != data.p {
            return Err(DataError::DimensionMismatch {
                subject: s.subject_id.clone(),
                rows: s.times.len(),
                nrows: s.values.nrows(),
                ncols: s.values.ncols(),
                p: data.p,
            });
        }
        for (row, t) in s.times.iter().enumerate() {
            if !t.is_finite() {
                return Err(DataError::NonFiniteValue {
                    subject: s.subject_id.clone(),
                    what: "time",
                    row,
                });
            }
        }
        for row in 0..s.values.nrows() {
            for col in 0..s.values.ncols() {
                if !s.values[(row, col)].is_finite() {
                    return Err(DataError::NonFiniteValue {
                        subject: s.subject_id.clone(),
                        what: "value",
                        row,
                    });
                }
            }
        }
    }

    let mut t_min = f64::INFINITY;
    let mut t_max = f64::NEG_INFINITY;
    for s in &data.subjects {
        for &t in &s.times {
            t_min = t_min.min(t);
            t_max = t_max.max(t);
        }
    }

    if t_min >= 0.0 && t_max <= 1.0 {
        // Already on the unit interval: leave times and any recorded map alone.
        return Ok(data);
    }

    // Span-zero data outside [0, 1] degenerates later at knot placement; map
    // it to the origin so validation itself stays total.
    let scale = if t_max > t_min {
        1.0 / (t_max - t_min)
    } else {
        1.0
    };
    let step = AffineTimeMap {
        offset: t_min,
        scale,
    };
    for s in &mut data.subjects {
        for t in &mut s.times {
            *t = step.apply(*t);
        }
    }
    // Compose with whatever map was already recorded so `time_map` always
    // takes *original* times to the final unit interval.
    let prev = data.time_map;
    data.time_map = AffineTimeMap {
        offset: prev.offset + step.offset / prev.scale,
        scale: prev.scale * step.scale,
    };
    Ok(data)
}

/// Descriptive statistics used in logs and reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n_subjects: usize,
    pub n_variables: usize,
    pub total_obs: usize,
    pub min_obs_per_subject: usize,
    pub median_obs_per_subject: f64,
    pub max_obs_per_subject: usize,
}

/// Counts subjects, variables, and the spread of per-subject observation counts.
pub fn summarize(data: &LongitudinalDataset) -> DatasetSummary {
    let mut counts: Vec<usize> = data.subjects.iter().map(|s| s.times.len()).collect();
    counts.sort_unstable();
    let n = counts.len();
    let median = if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    DatasetSummary {
        n_subjects: n,
        n_variables: data.p,
        total_obs: counts.iter().sum(),
        min_obs_per_subject: counts.first().copied().unwrap_or(0),
        median_obs_per_subject: median,
        max_obs_per_subject: counts.last().copied().unwrap_or(0),
    }
}

/// Shape of the cooling path from `t_max` down to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Temperatures decay by a constant ratio (default).
    Geometric,
    /// Inverse temperatures are equally spaced.
    Harmonic,
    /// Temperatures are equally spaced.
    Linear,
}

/// Annealing schedule description. Missing fields deserialize to the
/// defaults, so partial configs stay valid; unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// Starting temperature, required to lie in (1, 2).
    pub t_max: f64,
    /// Number of temperature levels including the final T = 1; 1 means no annealing.
    pub levels: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Geometric,
            t_max: 1.9,
            levels: 100,
        }
    }
}

/// Priors, model sizes, and fitting controls. Missing fields deserialize
/// to the defaults, so partial configs stay valid; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// Half-Cauchy scale for all variance parameters.
    pub half_cauchy_scale: f64,
    /// Prior standard deviation of the unpenalized (intercept and slope) coefficients.
    pub sigma_beta: f64,
    /// Beta prior (c0, d0) on each factor's inclusion probability; `None`
    /// resolves to (1, p) once the data dimension is known.
    pub omega_prior: Option<(f64, f64)>,
    /// Number of factors fitted (upper bound on the truth).
    pub q_max: usize,
    /// Number of smooth components per factor.
    pub l_max: usize,
    pub schedule: ScheduleSpec,
    /// Full coordinate sweeps run at each temperature above 1.
    pub sweeps_per_temperature: usize,
    /// Relative ELBO change declaring convergence at T = 1.
    pub tol: f64,
    /// Sweep cap at T = 1; hitting it is reported as a warning, not an error.
    pub max_iter: usize,
    /// Points in the dense evaluation grid used by post-processing.
    pub dense_grid_size: usize,
    /// Seed for the deterministic initialization draw.
    pub seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            half_cauchy_scale: 1e5,
            sigma_beta: 1e5,
            omega_prior: None,
            q_max: 5,
            l_max: 5,
            schedule: ScheduleSpec::default(),
            sweeps_per_temperature: 1,
            tol: 1e-5,
            max_iter: 1000,
            dense_grid_size: 100,
            seed: 0,
        }
    }
}

impl Hyperparameters {
    /// Resolved Beta prior on inclusion probabilities for a given `p`.
    pub fn omega_prior_for(&self, p: usize) -> (f64, f64) {
        self.omega_prior.unwrap_or((1.0, p as f64))
    }
}

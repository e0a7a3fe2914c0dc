//! Synthetic longitudinal data with a known factor structure.
//!
//! The generator draws from the same family the model assumes: sparse
//! loadings over latent factor trajectories, each trajectory a finite
//! combination of smooth orthonormal component functions, plus white
//! observation noise. Everything that went into a dataset (loadings,
//! component functions, scores, observation times, even the realized
//! noise) is recorded in [`SimTruth`] so a fit can later be scored
//! against the exact generating process.
//!
//! All randomness comes from named substreams of a single seed: one for
//! the component functions, one for the loadings, one for the mean
//! phases, and one per subject. Regenerating with the same config is
//! therefore bit-identical, and the per-subject streams keep the output
//! independent of iteration order or thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::data::{validate_dataset, LongitudinalDataset, SubjectRecord};
use crate::error::SimError;
use crate::postprocess::{dense_grid, trapezoid_weights};
use crate::rng::{self, SeededRng};
use crate::splines::bspline;

/// Interior knot count for the random component-function bases. Eight
/// equally spaced knots give 11-12 basis columns at degrees 2-3, enough
/// room for every component count this crate fits.
const NUM_INTERIOR_KNOTS: usize = 8;

/// Redraw budget before a factor's random functions are declared
/// numerically dependent.
const MAX_ORTHO_ATTEMPTS: usize = 10;

/// Relative residual norm below which a Gram-Schmidt step counts as a
/// dependent draw.
const ORTHO_RANK_TOLERANCE: f64 = 1e-8;

/// Redraw budget for producing at least one active variable per factor.
/// The empty-support probability is strictly below one for any proper
/// Beta prior, so hitting this cap means the prior is effectively
/// degenerate for the requested `p`.
const MAX_SUPPORT_ATTEMPTS: usize = 10_000;

// Substream layout under the config seed.
const STREAM_COMPONENTS: u64 = 0;
const STREAM_LOADINGS: u64 = 1;
const STREAM_PHASES: u64 = 2;
const STREAM_SUBJECT_BASE: u64 = 3;

/// How factor supports over variables are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sparsity {
    /// Every variable loads on every factor.
    Dense,
    /// A per-factor inclusion probability `pi ~ Beta(a, b)` is drawn,
    /// then each variable joins the factor's support independently with
    /// that probability. An empty support redraws both the probability
    /// and the column.
    Beta { a: f64, b: f64 },
}

/// Shape of the per-variable mean curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    /// `sin(2 pi t + phase_j)` with an independent uniform phase per
    /// variable and unit amplitude.
    Periodic,
    /// All mean curves identically zero.
    Zero,
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_eigen_degrees() -> Vec<usize> {
    vec![2, 3]
}

fn default_grid_size() -> usize {
    100
}

/// Settings for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Number of subjects.
    pub n_subjects: usize,
    /// Number of observed variables.
    pub p: usize,
    /// Number of latent factors.
    pub q: usize,
    /// Number of component functions per factor.
    pub l: usize,
    /// Inclusive bounds on the per-subject observation count.
    pub n_range: (usize, usize),
    /// How factor supports are drawn.
    pub sparsity: Sparsity,
    /// Shape of the mean curves.
    pub mean_kind: MeanKind,
    /// Observation noise standard deviation.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Candidate B-spline degrees for the random component functions;
    /// one is drawn per factor.
    #[serde(default = "default_eigen_degrees")]
    pub eigen_degrees: Vec<usize>,
    /// Size of the uniform grid on which truth curves are reported and
    /// in whose trapezoid inner product the component functions are
    /// orthonormalized.
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Master seed; all substreams derive from it.
    pub seed: u64,
}

impl SimConfig {
    /// High-dimensional sparse benchmark: 100 subjects, 20,000
    /// variables, three factors with two components each, strongly
    /// sparse Beta(1, 10) supports, and periodic means.
    pub fn large_sparse(seed: u64) -> Self {
        SimConfig {
            n_subjects: 100,
            p: 20_000,
            q: 3,
            l: 2,
            n_range: (5, 10),
            sparsity: Sparsity::Beta { a: 1.0, b: 10.0 },
            mean_kind: MeanKind::Periodic,
            noise_sd: default_noise_sd(),
            eigen_degrees: default_eigen_degrees(),
            grid_size: default_grid_size(),
            seed,
        }
    }

    /// Moderate benchmark: 30 subjects, 100 variables, two factors with
    /// three components each, zero means, and uniform Beta(1, 1)
    /// inclusion probabilities, so every variable loads on a factor with
    /// the same (random) probability.
    pub fn moderate_uniform(seed: u64) -> Self {
        SimConfig {
            n_subjects: 30,
            p: 100,
            q: 2,
            l: 3,
            n_range: (2, 10),
            sparsity: Sparsity::Beta { a: 1.0, b: 1.0 },
            mean_kind: MeanKind::Zero,
            noise_sd: default_noise_sd(),
            eigen_degrees: default_eigen_degrees(),
            grid_size: default_grid_size(),
            seed,
        }
    }

    /// Checks the config for internally consistent, generatable values.
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_subjects < 2 {
            return Err(SimError::InvalidConfig(format!(
                "need at least 2 subjects, got {}",
                self.n_subjects
            )));
        }
        if self.p == 0 {
            return Err(SimError::InvalidConfig("p must be positive".into()));
        }
        if self.q == 0 {
            return Err(SimError::InvalidConfig(
                "need at least one factor".into(),
            ));
        }
        if self.l == 0 {
            return Err(SimError::InvalidConfig(
                "need at least one component per factor".into(),
            ));
        }
        if self.n_range.0 == 0 || self.n_range.0 > self.n_range.1 {
            return Err(SimError::InvalidConfig(format!(
                "observation count range {:?} must be non-empty and start at 1 or more",
                self.n_range
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(SimError::InvalidConfig(format!(
                "noise standard deviation {} must be finite and non-negative",
                self.noise_sd
            )));
        }
        if self.eigen_degrees.is_empty() {
            return Err(SimError::InvalidConfig(
                "eigen_degrees must list at least one degree".into(),
            ));
        }
        for &d in &self.eigen_degrees {
            if d == 0 {
                return Err(SimError::InvalidConfig(
                    "component-function degrees must be at least 1".into(),
                ));
            }
            // Smallest basis the degree can produce must hold l functions.
            let basis_size = NUM_INTERIOR_KNOTS + d + 1;
            if self.l > basis_size {
                return Err(SimError::InvalidConfig(format!(
                    "{} components per factor exceed the {} basis columns of a degree-{} component basis",
                    self.l, basis_size, d
                )));
            }
        }
        if self.grid_size < 2 {
            return Err(SimError::InvalidConfig(format!(
                "truth grid needs at least 2 points, got {}",
                self.grid_size
            )));
        }
        if let Sparsity::Beta { a, b } = self.sparsity {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "Beta sparsity parameters ({a}, {b}) must be finite and positive"
                )));
            }
        }
        Ok(())
    }
}

/// One factor's orthonormal component functions: coefficient vectors in
/// a clamped B-spline basis, plus their tabulated values on the truth
/// grid. The coefficients are the single source of truth; [`Self::evaluate`]
/// matches the tabulated values at grid points to floating-point
/// accuracy and extends them smoothly everywhere else on [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenFunctionSet {
    /// B-spline degree of the basis.
    pub degree: usize,
    /// Equally spaced interior knots on (0, 1).
    pub interior_knots: Vec<f64>,
    /// `[component][basis column]` coefficients.
    pub coefs: Vec<Vec<f64>>,
    /// `[component][grid point]` values on the truth grid.
    pub values: Vec<Vec<f64>>,
}

impl EigenFunctionSet {
    /// Number of component functions in the set.
    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    /// Values of every component at `t`, sharing one basis evaluation.
    pub fn values_at(&self, t: f64) -> Vec<f64> {
        let knots = bspline::clamped_knots(&self.interior_knots, self.degree);
        let basis = bspline::basis_all(&knots, self.degree, t);
        self.coefs
            .iter()
            .map(|c| c.iter().zip(&basis).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Component `component` evaluated at `t`.
    pub fn evaluate(&self, component: usize, t: f64) -> f64 {
        self.values_at(t)[component]
    }
}

/// Complete record of the generating process behind one dataset.
///
/// Curves are tabulated on `grid`; the coefficient form in
/// `eigen_bases` evaluates the component functions anywhere on [0, 1].
/// Realized noise draws stay in memory for self-consistency checks but
/// are skipped when the truth is serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Uniform reporting grid on [0, 1].
    pub grid: Vec<f64>,
    /// `[variable][factor]` loading values, zero where inactive.
    pub loadings: Vec<Vec<f64>>,
    /// `[variable][factor]` support indicators.
    pub support: Vec<Vec<bool>>,
    /// Per-factor orthonormal component functions.
    pub eigen_bases: Vec<EigenFunctionSet>,
    /// `[factor][subject][component]` scores.
    pub scores: Vec<Vec<Vec<f64>>>,
    /// `[variable][grid point]` mean curves.
    pub means: Vec<Vec<f64>>,
    /// Shape the mean curves were drawn from.
    pub mean_kind: MeanKind,
    /// Per-variable phases for periodic means; empty for zero means.
    pub mean_phases: Vec<f64>,
    /// Realized observation times per subject, sorted ascending.
    pub times: Vec<Vec<f64>>,
    /// Observation noise standard deviation.
    pub noise_sd: f64,
    /// Realized noise draws per subject (`n_i x p`); in-memory only.
    #[serde(skip)]
    pub noise: Vec<DMatrix<f64>>,
}

impl SimTruth {
    pub fn n_subjects(&self) -> usize {
        self.times.len()
    }

    pub fn n_variables(&self) -> usize {
        self.loadings.len()
    }

    pub fn n_factors(&self) -> usize {
        self.eigen_bases.len()
    }

    /// Mean curve of variable `j` at `t`.
    pub fn mean_at(&self, j: usize, t: f64) -> f64 {
        match self.mean_kind {
            MeanKind::Zero => 0.0,
            MeanKind::Periodic => (TAU * t + self.mean_phases[j]).sin(),
        }
    }

    /// Factor `q`'s latent trajectory for subject `i` at `t`.
    pub fn factor_at(&self, q: usize, i: usize, t: f64) -> f64 {
        let vals = self.eigen_bases[q].values_at(t);
        self.scores[q][i]
            .iter()
            .zip(&vals)
            .map(|(z, v)| z * v)
            .sum()
    }

    /// Noise-free trajectory of variable `j` for subject `i` at `t`.
    pub fn signal_at(&self, i: usize, j: usize, t: f64) -> f64 {
        let mut v = self.mean_at(j, t);
        for q in 0..self.n_factors() {
            let b = self.loadings[j][q];
            if b != 0.0 {
                v += b * self.factor_at(q, i, t);
            }
        }
        v
    }

    /// Noise-free trajectory of variable `j` for subject `i`, tabulated
    /// on the truth grid.
    pub fn signal_on_grid(&self, i: usize, j: usize) -> Vec<f64> {
        let mut out = self.means[j].clone();
        for q in 0..self.n_factors() {
            let b = self.loadings[j][q];
            if b == 0.0 {
                continue;
            }
            for (l, value_row) in self.eigen_bases[q].values.iter().enumerate() {
                let zb = b * self.scores[q][i][l];
                for (o, v) in out.iter_mut().zip(value_row) {
                    *o += zb * v;
                }
            }
        }
        out
    }
}

/// Draws, for each of `q` factors, `l` smooth functions orthonormal in
/// the trapezoid inner product on `grid`.
///
/// Each factor gets a clamped B-spline basis with a degree drawn from
/// `degrees` and equally spaced interior knots; standard normal
/// coefficients are then Gram-Schmidt orthonormalized. Draws that come
/// out numerically dependent are retried a bounded number of times
/// before the factor is reported rank-deficient.
pub fn generate_eigenfunctions(
    q: usize,
    l: usize,
    degrees: &[usize],
    grid: &[f64],
    seed: u64,
) -> Result<Vec<EigenFunctionSet>, SimError> {
    assert!(!degrees.is_empty(), "degree set must be non-empty");
    assert!(grid.len() >= 2, "grid needs at least two points");
    let weights = trapezoid_weights(grid);
    let mut rng = rng::stream(seed, STREAM_COMPONENTS);
    (0..q)
        .map(|factor| draw_component_set(factor, l, degrees, grid, &weights, &mut rng))
        .collect()
}

/// Draws one factor's component set, retrying dependent draws.
fn draw_component_set(
    factor: usize,
    l: usize,
    degrees: &[usize],
    grid: &[f64],
    weights: &DVector<f64>,
    rng: &mut SeededRng,
) -> Result<EigenFunctionSet, SimError> {
    let degree = degrees[rng.random_range(0..degrees.len())];
    let interior: Vec<f64> = (1..=NUM_INTERIOR_KNOTS)
        .map(|k| k as f64 / (NUM_INTERIOR_KNOTS + 1) as f64)
        .collect();
    let knots = bspline::clamped_knots(&interior, degree);
    let m = bspline::num_basis(&knots, degree);

    // Tabulate the basis once; every attempt reuses it.
    let mut design = DMatrix::zeros(grid.len(), m);
    for (row, &t) in grid.iter().enumerate() {
        let basis = bspline::basis_all(&knots, degree, t);
        for (col, &v) in basis.iter().enumerate() {
            design[(row, col)] = v;
        }
    }

    for _ in 0..MAX_ORTHO_ATTEMPTS {
        let mut coefs: Vec<DVector<f64>> = (0..l)
            .map(|_| DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        if orthonormalize(&design, weights, &mut coefs) {
            // Re-tabulate from the final coefficients so the stored
            // values and `evaluate` agree exactly.
            let values: Vec<Vec<f64>> = coefs
                .iter()
                .map(|c| (&design * c).iter().copied().collect())
                .collect();
            return Ok(EigenFunctionSet {
                degree,
                interior_knots: interior,
                coefs: coefs.into_iter().map(|c| c.iter().copied().collect()).collect(),
                values,
            });
        }
    }
    Err(SimError::RankDeficiency {
        factor,
        attempts: MAX_ORTHO_ATTEMPTS,
    })
}

/// Modified Gram-Schmidt on `design * coefs[k]` under the weighted grid
/// inner product, applied to the coefficients in lockstep. Returns false
/// if any residual drops below the rank tolerance relative to its
/// pre-projection norm.
fn orthonormalize(
    design: &DMatrix<f64>,
    weights: &DVector<f64>,
    coefs: &mut [DVector<f64>],
) -> bool {
    let mut values: Vec<DVector<f64>> = coefs.iter().map(|c| design * c).collect();
    for k in 0..coefs.len() {
        let raw_norm = weighted_dot(&values[k], &values[k], weights).sqrt();
        for prev in 0..k {
            let r = weighted_dot(&values[k], &values[prev], weights);
            let adjusted_value = &values[k] - &values[prev] * r;
            values[k] = adjusted_value;
            let adjusted_coef = &coefs[k] - &coefs[prev] * r;
            coefs[k] = adjusted_coef;
        }
        let norm = weighted_dot(&values[k], &values[k], weights).sqrt();
        // NaNs fail this comparison too, so degenerate draws are retried.
        let independent = norm > ORTHO_RANK_TOLERANCE * raw_norm;
        if !independent || raw_norm == 0.0 {
            return false;
        }
        values[k] /= norm;
        coefs[k] /= norm;
    }
    true
}

fn weighted_dot(a: &DVector<f64>, b: &DVector<f64>, w: &DVector<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(w.iter())
        .map(|((x, y), wt)| x * y * wt)
        .sum()
}

/// Loading values and support indicators, both `[variable][factor]`.
type LoadingDraw = (Vec<Vec<f64>>, Vec<Vec<bool>>);

/// Draws `[variable][factor]` loadings and supports under `sparsity`.
/// Per factor and attempt the draw order is: inclusion probability (Beta
/// only), then per variable one uniform for the support indicator
/// followed by a standard normal value if active.
fn draw_loadings(
    p: usize,
    q: usize,
    sparsity: Sparsity,
    rng: &mut SeededRng,
) -> Result<LoadingDraw, SimError> {
    let mut loadings = vec![vec![0.0; q]; p];
    let mut support = vec![vec![false; q]; p];
    for factor in 0..q {
        match sparsity {
            Sparsity::Dense => {
                for j in 0..p {
                    support[j][factor] = true;
                    loadings[j][factor] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            Sparsity::Beta { a, b } => {
                let beta = Beta::new(a, b).map_err(|e| {
                    SimError::InvalidConfig(format!("Beta sparsity ({a}, {b}): {e}"))
                })?;
                let mut attempts = 0;
                loop {
                    attempts += 1;
                    if attempts > MAX_SUPPORT_ATTEMPTS {
                        return Err(SimError::InvalidConfig(format!(
                            "factor {factor}: no active variable in {MAX_SUPPORT_ATTEMPTS} \
                             support draws; Beta({a}, {b}) sparsity is degenerate for p = {p}"
                        )));
                    }
                    let pi: f64 = beta.sample(rng);
                    let mut any = false;
                    for j in 0..p {
                        let active = rng.random::<f64>() < pi;
                        support[j][factor] = active;
                        loadings[j][factor] = if active {
                            any = true;
                            rng.sample::<f64, _>(StandardNormal)
                        } else {
                            0.0
                        };
                    }
                    if any {
                        break;
                    }
                }
            }
        }
    }
    Ok((loadings, support))
}

/// One subject's realized draws before assembly into the dataset.
struct SubjectDraw {
    times: Vec<f64>,
    /// `[factor][component]` scores.
    scores: Vec<Vec<f64>>,
    /// `n_i x p` noise draws.
    noise: DMatrix<f64>,
}

/// Draws subject `i`'s observation times, scores, and noise from its own
/// substream. Draw order: observation count, times (sorted afterwards),
/// scores factor-major, then noise observation-major.
fn draw_subject(cfg: &SimConfig, i: usize) -> SubjectDraw {
    let mut rng = rng::stream(cfg.seed, STREAM_SUBJECT_BASE + i as u64);
    let n_i = rng.random_range(cfg.n_range.0..=cfg.n_range.1);
    let mut times: Vec<f64> = (0..n_i).map(|_| rng.random()).collect();
    times.sort_by(f64::total_cmp);
    // Component scores shrink with the component index: sd = 1 / (l + 1)
    // for zero-based l, so leading components carry the most signal.
    let scores: Vec<Vec<f64>> = (0..cfg.q)
        .map(|_| {
            (0..cfg.l)
                .map(|l| rng.sample::<f64, _>(StandardNormal) / (l as f64 + 1.0))
                .collect()
        })
        .collect();
    let mut noise = DMatrix::zeros(n_i, cfg.p);
    for row in 0..n_i {
        for col in 0..cfg.p {
            noise[(row, col)] = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    SubjectDraw {
        times,
        scores,
        noise,
    }
}

/// Generates one synthetic dataset together with its full generating
/// truth. Deterministic in the config: subjects live on independent
/// seed substreams, so thread count and iteration order cannot change
/// the output.
pub fn generate_dataset(cfg: &SimConfig) -> Result<(LongitudinalDataset, SimTruth), SimError> {
    cfg.validate()?;
    let grid = dense_grid(cfg.grid_size).expect("grid size was validated");

    let eigen_bases =
        generate_eigenfunctions(cfg.q, cfg.l, &cfg.eigen_degrees, &grid, cfg.seed)?;

    let mut loading_rng = rng::stream(cfg.seed, STREAM_LOADINGS);
    let (loadings, support) = draw_loadings(cfg.p, cfg.q, cfg.sparsity, &mut loading_rng)?;

    let mean_phases: Vec<f64> = match cfg.mean_kind {
        MeanKind::Periodic => {
            let mut rng = rng::stream(cfg.seed, STREAM_PHASES);
            (0..cfg.p).map(|_| TAU * rng.random::<f64>()).collect()
        }
        MeanKind::Zero => Vec::new(),
    };

    let draws: Vec<SubjectDraw> = (0..cfg.n_subjects)
        .into_par_iter()
        .map(|i| draw_subject(cfg, i))
        .collect();

    // Assemble observed values: x_ij(t) = mean + sum_q loading * factor + noise.
    let id_width = cfg.n_subjects.to_string().len();
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    let mut truth_scores = vec![vec![Vec::new(); cfg.n_subjects]; cfg.q];
    let mut truth_times = Vec::with_capacity(cfg.n_subjects);
    let mut truth_noise = Vec::with_capacity(cfg.n_subjects);
    for (i, draw) in draws.into_iter().enumerate() {
        let n_i = draw.times.len();
        // Factor trajectories at the realized times, shared across variables.
        let mut factor_vals = vec![vec![0.0; n_i]; cfg.q];
        for (q, vals) in factor_vals.iter_mut().enumerate() {
            for (r, &t) in draw.times.iter().enumerate() {
                let components = eigen_bases[q].values_at(t);
                vals[r] = draw.scores[q]
                    .iter()
                    .zip(&components)
                    .map(|(z, v)| z * v)
                    .sum();
            }
        }
        let mut values = draw.noise.clone();
        for (r, &t) in draw.times.iter().enumerate() {
            for j in 0..cfg.p {
                let mut v = match cfg.mean_kind {
                    MeanKind::Zero => 0.0,
                    MeanKind::Periodic => (TAU * t + mean_phases[j]).sin(),
                };
                for q in 0..cfg.q {
                    let b = loadings[j][q];
                    if b != 0.0 {
                        v += b * factor_vals[q][r];
                    }
                }
                values[(r, j)] += v;
            }
        }
        subjects.push(SubjectRecord {
            subject_id: format!("S{:0id_width$}", i + 1),
            times: draw.times.clone(),
            values,
        });
        for (q, s) in draw.scores.into_iter().enumerate() {
            truth_scores[q][i] = s;
        }
        truth_times.push(draw.times);
        truth_noise.push(draw.noise);
    }

    let means: Vec<Vec<f64>> = (0..cfg.p)
        .map(|j| {
            grid.iter()
                .map(|&t| match cfg.mean_kind {
                    MeanKind::Zero => 0.0,
                    MeanKind::Periodic => (TAU * t + mean_phases[j]).sin(),
                })
                .collect()
        })
        .collect();

    let dataset = validate_dataset(LongitudinalDataset::new(subjects, cfg.p, None))
        .expect("simulated data is finite with times already in [0, 1]");
    let truth = SimTruth {
        grid,
        loadings,
        support,
        eigen_bases,
        scores: truth_scores,
        means,
        mean_kind: cfg.mean_kind,
        mean_phases,
        times: truth_times,
        noise_sd: cfg.noise_sd,
        noise: truth_noise,
    };
    Ok((dataset, truth))
}

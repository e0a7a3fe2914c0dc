//! Evaluation of fitted models against simulation ground truth.
//!
//! A fitted model has no reason to present its factors in the simulator's
//! order, orientation, or component basis, so every comparison starts by
//! aligning estimated factors and components to the truth
//! ([`align_components`]). On top of the alignment sit the scalar scores:
//! integrated squared error for curves, rank-based AUC for support
//! recovery, pointwise prediction-band coverage and width, and the
//! replicate aggregation used in summary tables.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::MetricsError;
use crate::postprocess::{trapezoid_weights, FitResult, TrajectoryBand};
use crate::rng;
use crate::simulate::SimTruth;

/// Two primary costs closer than this are considered tied, letting the
/// secondary (eigenfunction) cost decide an assignment.
const TIE_TOLERANCE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

/// One matched component pair within a matched factor pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentMatch {
    /// Component index on the estimated side.
    pub est: usize,
    /// Component index on the truth side.
    pub truth: usize,
    /// Sign (+1/-1) that orients the estimated component along the truth.
    pub sign: f64,
    /// Absolute score correlation of the matched pair.
    pub score_corr: f64,
}

/// One estimated factor matched to a truth factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMatch {
    /// Position of the estimated factor in the fit's retained list.
    pub est_index: usize,
    /// The estimated factor's original column in the loading matrix.
    pub est_factor: usize,
    /// Matched truth factor.
    pub truth_factor: usize,
    /// Matched component pairs, at most min(retained components, truth
    /// components) of them.
    pub components: Vec<ComponentMatch>,
    /// Total absolute score correlation across matched components.
    pub score_corr_total: f64,
}

/// Correspondence between a fit's retained factors and the simulation
/// truth: a factor matching, per-factor component matchings with signs,
/// and the truth factors (if any) that no estimate accounts for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    /// One entry per matched estimated factor, ordered by retained index.
    pub matches: Vec<FactorMatch>,
    /// Truth factors with no estimated counterpart (misses).
    pub missed_truth_factors: Vec<usize>,
    /// Retained estimated factors with no truth counterpart (spurious).
    pub unmatched_est_factors: Vec<usize>,
}

/// Aligns retained estimated factors with the simulated ones.
///
/// Matching maximizes the summed absolute Pearson correlation between
/// estimated and true score columns (exhaustive assignment; factor and
/// component counts are small by construction). Eigenfunction cosines in
/// the quadrature inner product break ties, which matters when score
/// correlations are degenerate. Within a matched factor, components are
/// paired the same way using the factor's retained components, and each
/// pair's sign makes its correlation positive. An empty retained list
/// yields an empty map with every truth factor recorded as missed.
pub fn align_components(est: &FitResult, truth: &SimTruth) -> AlignmentMap {
    let n = truth.n_subjects();
    for f in &est.factors {
        assert_eq!(
            f.scores.len(),
            n,
            "fit and truth must describe the same subjects"
        );
    }
    let q_truth = truth.n_factors();
    if est.factors.is_empty() || q_truth == 0 {
        return AlignmentMap {
            matches: Vec::new(),
            missed_truth_factors: (0..q_truth).collect(),
            unmatched_est_factors: (0..est.factors.len()).collect(),
        };
    }

    let weights = trapezoid_weights(&est.dense_grid);
    // Truth eigenfunctions tabulated on the fit's grid (they evaluate
    // anywhere, so differing grids are fine).
    let truth_eigen: Vec<Vec<Vec<f64>>> = (0..q_truth)
        .map(|q| {
            if est.dense_grid == truth.grid {
                truth.eigen_bases[q].values.clone()
            } else {
                (0..truth.eigen_bases[q].len())
                    .map(|l| {
                        est.dense_grid
                            .iter()
                            .map(|&t| truth.eigen_bases[q].values_at(t)[l])
                            .collect()
                    })
                    .collect()
            }
        })
        .collect();

    // Best component pairing for every (estimated, truth) factor pair.
    let r_est = est.factors.len();
    let mut pair_primary = vec![vec![0.0; q_truth]; r_est];
    let mut pair_secondary = vec![vec![0.0; q_truth]; r_est];
    let mut pair_components: Vec<Vec<Vec<ComponentMatch>>> =
        vec![vec![Vec::new(); q_truth]; r_est];
    for (k, factor) in est.factors.iter().enumerate() {
        for q in 0..q_truth {
            let (primary, secondary, components) =
                match_components(factor, q, truth, &truth_eigen[q], &weights);
            pair_primary[k][q] = primary;
            pair_secondary[k][q] = secondary;
            pair_components[k][q] = components;
        }
    }

    // Assign estimated factors to truth factors on the pairing totals.
    let assignment = if r_est <= q_truth {
        best_assignment(&pair_primary, &pair_secondary)
    } else {
        let flip = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..q_truth)
                .map(|q| (0..r_est).map(|k| m[k][q]).collect())
                .collect()
        };
        let inverted = best_assignment(&flip(&pair_primary), &flip(&pair_secondary));
        let mut forward = vec![usize::MAX; r_est];
        for (q, k) in inverted.into_iter().enumerate() {
            forward[k] = q;
        }
        forward
    };

    let mut matches = Vec::new();
    let mut matched_truth = vec![false; q_truth];
    let mut unmatched_est = Vec::new();
    for (k, factor) in est.factors.iter().enumerate() {
        let q = assignment[k];
        if q == usize::MAX {
            unmatched_est.push(k);
            continue;
        }
        matched_truth[q] = true;
        matches.push(FactorMatch {
            est_index: k,
            est_factor: factor.factor,
            truth_factor: q,
            components: pair_components[k][q].clone(),
            score_corr_total: pair_primary[k][q],
        });
    }
    AlignmentMap {
        matches,
        missed_truth_factors: (0..q_truth).filter(|&q| !matched_truth[q]).collect(),
        unmatched_est_factors: unmatched_est,
    }
}

/// Pairs one estimated factor's retained components with one truth
/// factor's components, returning the summed |score correlation|, summed
/// |eigenfunction cosine|, and the pairing itself.
fn match_components(
    factor: &crate::postprocess::FactorSummary,
    q: usize,
    truth: &SimTruth,
    truth_eigen_on_grid: &[Vec<f64>],
    weights: &DVector<f64>,
) -> (f64, f64, Vec<ComponentMatch>) {
    let n_est = factor.n_components.min(factor.eigenfunctions.len());
    let n_truth = truth.eigen_bases[q].len();
    if n_est == 0 || n_truth == 0 {
        return (0.0, 0.0, Vec::new());
    }
    let est_scores: Vec<Vec<f64>> = (0..n_est)
        .map(|l| factor.scores.iter().map(|row| row[l]).collect())
        .collect();
    let truth_scores: Vec<Vec<f64>> = (0..n_truth)
        .map(|l| truth.scores[q].iter().map(|row| row[l]).collect())
        .collect();

    let mut corr = vec![vec![0.0; n_truth]; n_est];
    let mut cosine = vec![vec![0.0; n_truth]; n_est];
    for e in 0..n_est {
        for t in 0..n_truth {
            corr[e][t] = pearson(&est_scores[e], &truth_scores[t]);
            cosine[e][t] =
                weighted_cosine(&factor.eigenfunctions[e], &truth_eigen_on_grid[t], weights);
        }
    }
    let abs = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        m.iter()
            .map(|row| row.iter().map(|v| v.abs()).collect())
            .collect()
    };
    let (abs_corr, abs_cos) = (abs(&corr), abs(&cosine));

    // Orient the exhaustive search so rows are the smaller side.
    let pairs: Vec<(usize, usize)> = if n_est <= n_truth {
        best_assignment(&abs_corr, &abs_cos)
            .into_iter()
            .enumerate()
            .collect()
    } else {
        let flip = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            (0..n_truth)
                .map(|t| (0..n_est).map(|e| m[e][t]).collect())
                .collect()
        };
        best_assignment(&flip(&abs_corr), &flip(&abs_cos))
            .into_iter()
            .enumerate()
            .map(|(t, e)| (e, t))
            .collect()
    };

    let mut components = Vec::with_capacity(pairs.len());
    let (mut primary, mut secondary) = (0.0, 0.0);
    for (e, t) in pairs {
        let sign = if corr[e][t].abs() > TIE_TOLERANCE {
            corr[e][t].signum()
        } else if cosine[e][t].abs() > TIE_TOLERANCE {
            cosine[e][t].signum()
        } else {
            1.0
        };
        primary += abs_corr[e][t];
        secondary += abs_cos[e][t];
        components.push(ComponentMatch {
            est: e,
            truth: t,
            sign,
            score_corr: abs_corr[e][t],
        });
    }
    components.sort_by_key(|c| c.est);
    (primary, secondary, components)
}

/// Exhaustive best assignment of every row to a distinct column
/// (requires rows <= columns), maximizing the summed primary cost with
/// the secondary cost breaking ties. Row and column counts are bounded
/// by the factor and component caps, so enumeration stays trivial.
fn best_assignment(primary: &[Vec<f64>], secondary: &[Vec<f64>]) -> Vec<usize> {
    let rows = primary.len();
    let cols = primary[0].len();
    assert!(rows <= cols, "assignment rows must not exceed columns");
    let mut used = vec![false; cols];
    let mut current = Vec::with_capacity(rows);
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    search_assignment(
        0,
        primary,
        secondary,
        &mut used,
        &mut current,
        (0.0, 0.0),
        &mut best,
    );
    best.expect("at least one assignment exists").2
}

fn search_assignment(
    row: usize,
    primary: &[Vec<f64>],
    secondary: &[Vec<f64>],
    used: &mut [bool],
    current: &mut Vec<usize>,
    sums: (f64, f64),
    best: &mut Option<(f64, f64, Vec<usize>)>,
) {
    if row == primary.len() {
        let better = match best {
            None => true,
            Some((bp, bs, _)) => {
                sums.0 > *bp + TIE_TOLERANCE
                    || ((sums.0 - *bp).abs() <= TIE_TOLERANCE && sums.1 > *bs)
            }
        };
        if better {
            *best = Some((sums.0, sums.1, current.clone()));
        }
        return;
    }
    for col in 0..primary[row].len() {
        if used[col] {
            continue;
        }
        used[col] = true;
        current.push(col);
        search_assignment(
            row + 1,
            primary,
            secondary,
            used,
            current,
            (
                sums.0 + primary[row][col],
                sums.1 + secondary[row][col],
            ),
            best,
        );
        current.pop();
        used[col] = false;
    }
}

/// Pearson correlation; zero when either side is numerically constant.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Normalized inner product of two curves under the quadrature weights;
/// zero when either curve is numerically null.
fn weighted_cosine(a: &[f64], b: &[f64], weights: &DVector<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut naa, mut nbb, mut nab) = (0.0, 0.0, 0.0);
    for ((&x, &y), &w) in a.iter().zip(b).zip(weights.iter()) {
        naa += w * x * x;
        nbb += w * y * y;
        nab += w * x * y;
    }
    if naa <= 0.0 || nbb <= 0.0 {
        0.0
    } else {
        nab / (naa * nbb).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Curve error
// ---------------------------------------------------------------------------

/// Trapezoid approximation of the integrated squared difference between
/// two curves sampled on the same grid. Non-negative and symmetric.
pub fn integrated_squared_error(
    f_true: &[f64],
    f_est: &[f64],
    grid: &[f64],
) -> Result<f64, MetricsError> {
    if f_true.len() != f_est.len() {
        return Err(MetricsError::GridMismatch(f_true.len(), f_est.len()));
    }
    if f_true.len() != grid.len() {
        return Err(MetricsError::GridMismatch(f_true.len(), grid.len()));
    }
    let weights = trapezoid_weights(grid);
    Ok(f_true
        .iter()
        .zip(f_est)
        .zip(weights.iter())
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum())
}

/// The model's posterior-mean curve for subject `i`, variable `j`, on the
/// fit's grid: mean curve plus every retained factor's full component
/// expansion (truncation is a reporting device; the fitted trajectory
/// keeps all components).
pub fn reconstructed_curve(est: &FitResult, i: usize, j: usize) -> Vec<f64> {
    let mut out = est.mean_curves[j].clone();
    for factor in &est.factors {
        let b = est.loading_means[j][factor.factor];
        if b == 0.0 {
            continue;
        }
        for (l, psi) in factor.eigenfunctions.iter().enumerate() {
            let zb = b * factor.scores[i][l];
            for (o, v) in out.iter_mut().zip(psi) {
                *o += zb * v;
            }
        }
    }
    out
}

/// Mean integrated squared error of the reconstructed trajectories over
/// every (subject, variable) pair, against the noise-free truth.
pub fn mean_trajectory_ise(est: &FitResult, truth: &SimTruth) -> Result<f64, MetricsError> {
    if est.metadata.n_variables != truth.n_variables() {
        return Err(MetricsError::Mismatch {
            what: "variable count",
            fit: est.metadata.n_variables,
            truth: truth.n_variables(),
        });
    }
    if est.metadata.n_subjects != truth.n_subjects() {
        return Err(MetricsError::Mismatch {
            what: "subject count",
            fit: est.metadata.n_subjects,
            truth: truth.n_subjects(),
        });
    }
    let grid = &est.dense_grid;
    let same_grid = *grid == truth.grid;
    let mut total = 0.0;
    for i in 0..truth.n_subjects() {
        for j in 0..truth.n_variables() {
            let fitted = reconstructed_curve(est, i, j);
            let signal = if same_grid {
                truth.signal_on_grid(i, j)
            } else {
                grid.iter().map(|&t| truth.signal_at(i, j, t)).collect()
            };
            total += integrated_squared_error(&signal, &fitted, grid)?;
        }
    }
    Ok(total / (truth.n_subjects() * truth.n_variables()) as f64)
}

// ---------------------------------------------------------------------------
// Support recovery
// ---------------------------------------------------------------------------

/// AUC of loading-support recovery, pooled over the full loading matrix
/// and per matched factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingAuc {
    /// AUC over every (variable, fitted column) pair. Matched columns
    /// take their truth factor's support as labels; columns with no truth
    /// counterpart count as fully inactive, so an over-specified fit is
    /// scored on pushing its spare columns toward zero.
    pub pooled: f64,
    /// Per matched factor: (truth factor, AUC), `None` when that factor's
    /// support column has only one class.
    pub per_factor: Vec<(usize, Option<f64>)>,
}

/// Scores support recovery: how well the posterior inclusion
/// probabilities rank truly active loadings above inactive ones.
///
/// `gamma` holds the fit's `[variable][factor]` inclusion probabilities
/// (original factor columns); `support` is the truth mask. Matched
/// columns are paired through the alignment; every other fitted column
/// is labeled inactive, which keeps the statistic defined when the truth
/// is dense and the model over-specified. Ties get midranks, making the
/// result the Mann-Whitney statistic.
pub fn loading_auc(
    gamma: &[Vec<f64>],
    support: &[Vec<bool>],
    alignment: &AlignmentMap,
) -> Result<LoadingAuc, MetricsError> {
    let width = gamma.first().map_or(0, Vec::len);
    let mut truth_of_col = vec![None; width];
    for m in &alignment.matches {
        truth_of_col[m.est_factor] = Some(m.truth_factor);
    }
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut per_factor = Vec::with_capacity(alignment.matches.len());
    for (col, truth_col) in truth_of_col.iter().enumerate() {
        let scores: Vec<f64> = gamma.iter().map(|row| row[col]).collect();
        let labels: Vec<bool> = match truth_col {
            Some(q) => support.iter().map(|row| row[*q]).collect(),
            None => vec![false; scores.len()],
        };
        pooled_scores.extend_from_slice(&scores);
        pooled_labels.extend_from_slice(&labels);
        if let Some(q) = truth_col {
            per_factor.push((*q, midrank_auc(&scores, &labels).ok()));
        }
    }
    Ok(LoadingAuc {
        pooled: midrank_auc(&pooled_scores, &pooled_labels)?,
        per_factor,
    })
}

/// Mann-Whitney AUC with midranks for ties.
fn midrank_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels(n_neg == 0));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start;
        while end + 1 < idx.len() && scores[idx[end + 1]] == scores[idx[start]] {
            end += 1;
        }
        // 1-based midrank shared by the whole tie group.
        let midrank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &idx[start..=end] {
            ranks[i] = midrank;
        }
        start = end + 1;
    }
    let positive_rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&l, _)| l)
        .map(|(_, &r)| r)
        .sum();
    let np = n_pos as f64;
    Ok((positive_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

// ---------------------------------------------------------------------------
// Prediction-band coverage
// ---------------------------------------------------------------------------

/// What the bands are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageTarget {
    /// Freshly simulated noisy observations at each grid point (the
    /// default: prediction bands promise to cover new data).
    NoisyDraws { seed: u64 },
    /// Exact probability mass of signal + noise inside the band,
    /// averaged over grid points.
    Analytic,
    /// The noise-free signal itself (credible-style diagnostic).
    Signal,
}

/// Coverage (in percent) and mean width of prediction bands against the
/// generating truth.
///
/// `signals` holds the noise-free truth curve for each band, on that
/// band's grid. For `NoisyDraws`, one noisy observable per grid point is
/// drawn from a stream seeded only by `seed`, iterating bands in order;
/// results are therefore reproducible.
pub fn band_coverage_width(
    bands: &[TrajectoryBand],
    signals: &[Vec<f64>],
    noise_sd: f64,
    target: CoverageTarget,
) -> Result<(f64, f64), MetricsError> {
    if bands.len() != signals.len() {
        return Err(MetricsError::Mismatch {
            what: "evaluated trajectory count",
            fit: bands.len(),
            truth: signals.len(),
        });
    }
    assert!(!bands.is_empty(), "need at least one band to evaluate");
    assert!(
        noise_sd.is_finite() && noise_sd >= 0.0,
        "noise sd must be finite and non-negative"
    );
    for (band, signal) in bands.iter().zip(signals) {
        if band.lower.len() != signal.len() {
            return Err(MetricsError::GridMismatch(band.lower.len(), signal.len()));
        }
    }

    let mut draw_rng = match target {
        CoverageTarget::NoisyDraws { seed } => Some(rng::seeded(seed)),
        _ => None,
    };
    let unit_normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    let mut covered = 0.0;
    let mut width = 0.0;
    let mut points = 0usize;
    for (band, signal) in bands.iter().zip(signals) {
        for ((&lo, &hi), &s) in band.lower.iter().zip(&band.upper).zip(signal) {
            width += hi - lo;
            points += 1;
            covered += match target {
                CoverageTarget::Signal => f64::from(lo <= s && s <= hi),
                CoverageTarget::NoisyDraws { .. } => {
                    let rng = draw_rng.as_mut().expect("rng exists for noisy draws");
                    let y = s + noise_sd * rng.sample::<f64, _>(StandardNormal);
                    f64::from(lo <= y && y <= hi)
                }
                CoverageTarget::Analytic => {
                    if noise_sd == 0.0 {
                        f64::from(lo <= s && s <= hi)
                    } else {
                        let upper_mass = unit_normal.cdf((hi - s) / noise_sd);
                        let lower_mass = unit_normal.cdf((lo - s) / noise_sd);
                        (upper_mass - lower_mass).max(0.0)
                    }
                }
            };
        }
    }
    let denom = points as f64;
    Ok((100.0 * covered / denom, width / denom))
}

// ---------------------------------------------------------------------------
// Replicate aggregation
// ---------------------------------------------------------------------------

/// One replicate's row of summary metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    /// Pooled loading-support AUC.
    pub auc: f64,
    /// Mean integrated squared error of reconstructed trajectories.
    pub ise_y: f64,
    /// Prediction-band coverage in percent.
    pub coverage: f64,
    /// Mean prediction-band width.
    pub width: f64,
    /// Number of retained factors.
    pub retained_factors: f64,
}

/// Mean and standard error of one metric across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation divided by the square root of the
    /// replicate count.
    pub se: f64,
}

/// Aggregated view of a replicate study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicates: usize,
    pub auc: MetricSummary,
    pub ise_y: MetricSummary,
    pub coverage: MetricSummary,
    pub width: MetricSummary,
    pub retained_factors: MetricSummary,
    /// Raw per-replicate rows the summaries were computed from.
    pub raw: Vec<ReplicateMetrics>,
    /// Fingerprint of the configuration that produced the replicates.
    pub config_fingerprint: String,
}

/// Averages per-replicate metrics into mean and standard error rows.
pub fn aggregate_replicates(rows: &[ReplicateMetrics], config_fingerprint: &str) -> ReplicateReport {
    assert!(rows.len() >= 2, "aggregation needs at least two replicates");
    let summarize = |pick: fn(&ReplicateMetrics) -> f64| -> MetricSummary {
        let n = rows.len() as f64;
        let mean = rows.iter().map(pick).sum::<f64>() / n;
        let ss: f64 = rows
            .iter()
            .map(pick)
            .map(|v| (v - mean) * (v - mean))
            .sum();
        MetricSummary {
            mean,
            se: (ss / (n - 1.0)).sqrt() / n.sqrt(),
        }
    };
    ReplicateReport {
        replicates: rows.len(),
        auc: summarize(|r| r.auc),
        ise_y: summarize(|r| r.ise_y),
        coverage: summarize(|r| r.coverage),
        width: summarize(|r| r.width),
        retained_factors: summarize(|r| r.retained_factors),
        raw: rows.to_vec(),
        config_fingerprint: config_fingerprint.to_string(),
    }
}

impl ReplicateReport {
    /// Renders the standard results table: one row per metric, values as
    /// "mean (se)".
    pub fn to_markdown(&self) -> String {
        let cell = |s: &MetricSummary| format!("{:.3} ({:.3})", s.mean, s.se);
        let mut out = String::new();
        out.push_str(&format!(
            "| Metric | Mean (SE) over {} replicates |\n",
            self.replicates
        ));
        out.push_str("| --- | --- |\n");
        out.push_str(&format!("| AUC | {} |\n", cell(&self.auc)));
        out.push_str(&format!("| ISE y | {} |\n", cell(&self.ise_y)));
        out.push_str(&format!("| Coverage (%) | {} |\n", cell(&self.coverage)));
        out.push_str(&format!("| Width | {} |\n", cell(&self.width)));
        out.push_str(&format!(
            "| Retained factors | {} |\n",
            cell(&self.retained_factors)
        ));
        out
    }
}

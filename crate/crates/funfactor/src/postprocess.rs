//! Factor rotation and summaries.
//!
//! Inference leaves each factor's smooth components in an arbitrary linear
//! parametrization: any invertible mixing of components and scores describes
//! the same trajectories. This module restores the principal-component view.
//! Posterior-mean factor trajectories are evaluated on a dense grid, their
//! empirical second-moment kernel is eigendecomposed under trapezoid
//! quadrature, and scores are re-expressed in the resulting orthonormal
//! directions, ordered by the variance they carry. On top of the rotation it
//! provides component truncation by explained variance, factor retention by
//! posterior inclusion probability, Monte-Carlo prediction bands, and the
//! assembly of everything into a serializable [`FitResult`].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Hyperparameters;
use crate::error::PostprocessError;
use crate::inference::{ElboTrace, FitOutput, FitStatus, VariationalState};
use crate::rng::{self, SeededRng};
use crate::splines::SplineBasis;

/// Cumulative explained-variance level at which components are truncated.
pub const DEFAULT_PVE_THRESHOLD: f64 = 0.99;
/// Median-probability rule: keep factors whose inclusion probability exceeds this.
pub const DEFAULT_PPI_THRESHOLD: f64 = 0.5;
/// Coverage level of prediction bands.
pub const DEFAULT_BAND_LEVEL: f64 = 0.95;
/// Monte-Carlo sample size behind prediction bands.
pub const DEFAULT_BAND_DRAWS: usize = 500;

/// Largest grid eigenvalue at or below which a factor counts as numerically
/// rank zero (trajectories indistinguishable from the zero function).
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `g` equally spaced points spanning [0, 1].
pub fn dense_grid(g: usize) -> Result<Vec<f64>, PostprocessError> {
    if g < 2 {
        return Err(PostprocessError::GridTooSmall(g));
    }
    Ok((0..g).map(|t| t as f64 / (g - 1) as f64).collect())
}

/// Trapezoid quadrature weights for a sorted grid: half the gap on each side
/// of every point. On the uniform grid this is `Δ = 1/(G−1)` inside and
/// `Δ/2` at the ends. The same convention is used for every inner product
/// and integrated error in this crate.
pub fn trapezoid_weights(grid: &[f64]) -> DVector<f64> {
    let g = grid.len();
    assert!(g >= 2, "trapezoid weights need at least two grid points");
    let mut w = DVector::zeros(g);
    for t in 0..g - 1 {
        let half = 0.5 * (grid[t + 1] - grid[t]);
        w[t] += half;
        w[t + 1] += half;
    }
    w
}

/// One factor after rotation into principal components.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatedFactor {
    /// Factor index in the fitted state.
    pub factor: usize,
    /// `G x l_max`; column ℓ is the ℓ-th eigenfunction on the grid,
    /// orthonormal in the trapezoid inner product, sign fixed so ∫ψ ≥ 0.
    pub eigenfunctions: DMatrix<f64>,
    /// `N x l_max` rotated scores: weighted projections of each subject's
    /// posterior-mean trajectory onto the eigenfunctions.
    pub scores: DMatrix<f64>,
    /// Empirical variances of the rotated score columns, non-increasing.
    pub eigenvalues: Vec<f64>,
}

/// Rotates every factor on a `g`-point uniform grid; factors whose empirical
/// covariance is numerically rank zero come back as per-factor errors so
/// callers can flag them inactive without losing the rest.
pub fn orthonormalize_factors(
    state: &VariationalState,
    basis: &SplineBasis,
    g: usize,
) -> Result<Vec<Result<RotatedFactor, PostprocessError>>, PostprocessError> {
    let grid = dense_grid(g)?;
    let design = basis.design(&grid);
    let weights = trapezoid_weights(&grid);
    Ok((0..state.q_max)
        .map(|q| rotate_factor(state, &design, &weights, q))
        .collect())
}

/// Rotates a single factor on an arbitrary sorted grid.
pub fn orthonormalize_factor(
    state: &VariationalState,
    basis: &SplineBasis,
    grid: &[f64],
    q: usize,
) -> Result<RotatedFactor, PostprocessError> {
    if grid.len() < 2 {
        return Err(PostprocessError::GridTooSmall(grid.len()));
    }
    let design = basis.design(grid);
    let weights = trapezoid_weights(grid);
    rotate_factor(state, &design, &weights, q)
}

/// Core of the rotation: weighted eigendecomposition of the uncentered
/// empirical covariance of posterior-mean trajectories.
///
/// The uncentered (second-moment) kernel is used deliberately: its leading
/// eigenvectors span the trajectories themselves, which is what makes the
/// rotation lossless — re-expanding each subject in the new basis reproduces
/// its curve exactly, a guarantee a mean-centered kernel cannot give when
/// the average trajectory is far from zero. Scores have prior mean zero, so
/// the second moment is also the natural "empirical variance".
fn rotate_factor(
    state: &VariationalState,
    design: &DMatrix<f64>,
    weights: &DVector<f64>,
    q: usize,
) -> Result<RotatedFactor, PostprocessError> {
    let n = state.n_subjects();
    let g = weights.len();
    let l_max = state.l_max;
    assert!(g >= l_max, "grid must have at least l_max points");

    // Posterior-mean factor trajectories, one row per subject.
    let mut curves = DMatrix::zeros(n, g);
    for i in 0..n {
        let h = design * state.factor_coef(i, q);
        curves.row_mut(i).tr_copy_from(&h);
    }

    // Symmetrize the weighted eigenproblem: M = W^{1/2} Σ̂ W^{1/2} with
    // Σ̂ = curvesᵀ curves / N. Eigenvectors v of M give eigenfunctions
    // ψ = v / √w, orthonormal in the weighted inner product.
    let sqrt_w = weights.map(f64::sqrt);
    let mut scaled = curves.clone();
    for t in 0..g {
        let s = sqrt_w[t];
        for r in 0..n {
            scaled[(r, t)] *= s;
        }
    }
    let m = scaled.transpose() * &scaled / n as f64;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    if eig.eigenvalues[order[0]] <= RANK_TOLERANCE {
        return Err(PostprocessError::DegenerateFactor {
            factor: q,
            threshold: RANK_TOLERANCE,
        });
    }

    // Keep the top l_max directions (the kernel's rank cannot exceed l_max),
    // attach scores by weighted projection, and order by the variance the
    // scores actually carry. Empirical variances are means of squares, so
    // they are non-negative by construction even where the matrix
    // eigenvalues round below zero.
    let mut components: Vec<(f64, DVector<f64>, DVector<f64>)> = order
        .iter()
        .take(l_max)
        .map(|&idx| {
            let v = eig.eigenvectors.column(idx);
            let zeta = &scaled * v;
            let psi = DVector::from_iterator(g, (0..g).map(|t| v[t] / sqrt_w[t]));
            (zeta.norm_squared() / n as f64, psi, zeta)
        })
        .collect();
    components.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut eigenfunctions = DMatrix::zeros(g, l_max);
    let mut scores = DMatrix::zeros(n, l_max);
    let mut eigenvalues = Vec::with_capacity(l_max);
    for (l, (lambda, mut psi, mut zeta)) in components.into_iter().enumerate() {
        if weights.dot(&psi) < 0.0 {
            psi.neg_mut();
            zeta.neg_mut();
        }
        eigenfunctions.column_mut(l).copy_from(&psi);
        scores.column_mut(l).copy_from(&zeta);
        eigenvalues.push(lambda);
    }

    Ok(RotatedFactor {
        factor: q,
        eigenfunctions,
        scores,
        eigenvalues,
    })
}

/// Proportion of variance explained: each eigenvalue over the total across
/// all fitted components. `factor` only labels the error when every
/// eigenvalue is numerically zero.
pub fn compute_pve(eigenvalues: &[f64], factor: usize) -> Result<Vec<f64>, PostprocessError> {
    let total: f64 = eigenvalues.iter().map(|&l| l.max(0.0)).sum();
    if total <= RANK_TOLERANCE {
        return Err(PostprocessError::DegenerateFactor {
            factor,
            threshold: RANK_TOLERANCE,
        });
    }
    Ok(eigenvalues.iter().map(|&l| l.max(0.0) / total).collect())
}

/// Smallest number of leading components whose cumulative PVE reaches the
/// threshold (with a 1e-12 slack so exact-threshold sums are not lost to
/// rounding); all components if the threshold is never reached.
pub fn select_components(pve: &[f64], threshold: f64) -> usize {
    let mut cum = 0.0;
    for (l, &v) in pve.iter().enumerate() {
        cum += v;
        if cum >= threshold - 1e-12 {
            return l + 1;
        }
    }
    pve.len()
}

/// Factor retention by the median-probability rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSelection {
    /// Per-factor probability that at least one loading is active:
    /// `1 − Π_j (1 − γ*_jq)`.
    pub ppi: Vec<f64>,
    /// Indices with `ppi > threshold`, ascending.
    pub retained: Vec<usize>,
}

/// Computes factor inclusion probabilities and applies the retention rule.
/// The product over variables is accumulated in log space so thousands of
/// near-one survival terms do not round the probability to exactly 1.
pub fn select_factors(state: &VariationalState, threshold: f64) -> FactorSelection {
    let ppi: Vec<f64> = (0..state.q_max)
        .map(|q| {
            let log_all_off: f64 = state
                .loadings
                .iter()
                .map(|row| {
                    let gamma = row[q].gamma;
                    if gamma >= 1.0 {
                        f64::NEG_INFINITY
                    } else {
                        (-gamma).ln_1p()
                    }
                })
                .sum();
            -log_all_off.exp_m1()
        })
        .collect();
    let retained = (0..state.q_max).filter(|&q| ppi[q] > threshold).collect();
    FactorSelection { ppi, retained }
}

/// Pointwise prediction band for one (variable, subject) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBand {
    pub grid: Vec<f64>,
    /// Curve assembled from posterior means.
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Monte-Carlo prediction band for variable `j`, subject `i`.
///
/// Each draw samples every variational factor independently — mean
/// coefficients, eigenfunction coefficients, scores, the loading (spike or
/// slab), and a noise variance — assembles the fitted curve on the grid, and
/// adds observation noise at each point, so the band is predictive for a new
/// noisy observation rather than a credible band for the smooth signal.
/// Bounds are pointwise empirical quantiles at `(1 ± level)/2`. Deterministic
/// in `seed` (one counter-based stream per draw), independent of thread count.
pub fn predict_trajectory_bands(
    state: &VariationalState,
    basis: &SplineBasis,
    j: usize,
    i: usize,
    grid: &[f64],
    level: f64,
    draws: usize,
    seed: u64,
) -> TrajectoryBand {
    bands_for_variable(state, basis, j, &[i], grid, level, draws, seed)
        .pop()
        .expect("one subject requested")
}

/// Prediction bands for one variable and several subjects at once.
///
/// Shared parameters (eigenfunction coefficients, the variable's mean curve,
/// loading, and noise variance) are drawn once per Monte-Carlo replicate and
/// reused across subjects — a valid joint posterior draw that keeps each
/// subject's marginal band exact while making whole-dataset coverage sweeps
/// affordable. Returned bands follow the order of `subjects`.
pub fn bands_for_variable(
    state: &VariationalState,
    basis: &SplineBasis,
    j: usize,
    subjects: &[usize],
    grid: &[f64],
    level: f64,
    draws: usize,
    seed: u64,
) -> Vec<TrajectoryBand> {
    assert!(level > 0.0 && level < 1.0, "band level must lie in (0, 1)");
    assert!(draws >= 2, "need at least two Monte-Carlo draws");
    let g = grid.len();
    let (q_max, l_max, k) = (state.q_max, state.l_max, state.k);
    let design = basis.design(grid);

    // Factor every covariance once; draws then cost one matrix-vector
    // product each. Eigendecomposition with clamped eigenvalues tolerates
    // the exactly singular covariances degenerate states produce.
    let eigen_factors: Vec<Vec<DMatrix<f64>>> = (0..q_max)
        .map(|q| {
            (0..l_max)
                .map(|l| psd_factor(&state.eigen_coeffs[q][l].cov))
                .collect()
        })
        .collect();
    let mean_factor = psd_factor(&state.mean_coeffs[j].cov);
    let score_factors: Vec<Vec<DMatrix<f64>>> = subjects
        .iter()
        .map(|&i| {
            (0..q_max)
                .map(|q| psd_factor(&state.scores[i][q].cov))
                .collect()
        })
        .collect();
    let noise = &state.noise[j];
    let noise_gamma =
        Gamma::new(noise.shape, noise.rate.recip()).expect("noise factor has positive shape/rate");

    // samples[d][s] is the drawn noisy curve for subjects[s] in draw d.
    let samples: Vec<Vec<DVector<f64>>> = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = rng::stream(seed, d as u64);

            // Shared draws: component curves, mean curve, noise variance, loading.
            let mut comp = vec![vec![DVector::<f64>::zeros(g); l_max]; q_max];
            for (q, factor_row) in eigen_factors.iter().enumerate() {
                for (l, factor) in factor_row.iter().enumerate() {
                    let nu = &state.eigen_coeffs[q][l].mean + factor * normal_vec(&mut rng, k);
                    comp[q][l] = &design * nu;
                }
            }
            let base =
                &design * (&state.mean_coeffs[j].mean + &mean_factor * normal_vec(&mut rng, k));
            let sigma = noise_gamma.sample(&mut rng).recip().sqrt();
            let b: Vec<f64> = (0..q_max)
                .map(|q| {
                    let blk = &state.loadings[j][q];
                    if rng.random::<f64>() < blk.gamma {
                        blk.slab_mean
                            + blk.slab_var.max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect();

            // Subject-specific draws: scores, then observation noise.
            subjects
                .iter()
                .enumerate()
                .map(|(s, &i)| {
                    let mut curve = base.clone();
                    for q in 0..q_max {
                        let blk = &state.scores[i][q];
                        let zeta = &blk.mean + &score_factors[s][q] * normal_vec(&mut rng, l_max);
                        for l in 0..l_max {
                            curve.axpy(b[q] * zeta[l], &comp[q][l], 1.0);
                        }
                    }
                    for t in 0..g {
                        curve[t] += sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                    curve
                })
                .collect()
        })
        .collect();

    let (p_lo, p_hi) = (0.5 * (1.0 - level), 0.5 * (1.0 + level));
    subjects
        .iter()
        .enumerate()
        .map(|(s, &i)| {
            let mean = posterior_mean_curve(state, &design, j, i);
            let mut lower = Vec::with_capacity(g);
            let mut upper = Vec::with_capacity(g);
            let mut column = vec![0.0; draws];
            for t in 0..g {
                for (d, draw) in samples.iter().enumerate() {
                    column[d] = draw[s][t];
                }
                column.sort_by(|a, b| a.partial_cmp(b).unwrap());
                lower.push(empirical_quantile(&column, p_lo));
                upper.push(empirical_quantile(&column, p_hi));
            }
            TrajectoryBand {
                grid: grid.to_vec(),
                mean: mean.iter().copied().collect(),
                lower,
                upper,
            }
        })
        .collect()
}

/// Fitted curve for (j, i) from posterior means.
fn posterior_mean_curve(
    state: &VariationalState,
    design: &DMatrix<f64>,
    j: usize,
    i: usize,
) -> DVector<f64> {
    let mut coef = state.mean_coeffs[j].mean.clone();
    for q in 0..state.q_max {
        coef.axpy(state.loadings[j][q].e_b(), &state.factor_coef(i, q), 1.0);
    }
    design * coef
}

/// Square root `F` of a positive semi-definite matrix (`F Fᵀ = cov`) via
/// eigendecomposition with negative eigenvalues clamped to zero, so exactly
/// singular covariances sample cleanly as degenerate Gaussians.
fn psd_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = cov.clone().symmetric_eigen();
    let mut f = eig.eigenvectors;
    for (c, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for r in 0..f.nrows() {
            f[(r, c)] *= s;
        }
    }
    f
}

fn normal_vec(rng: &mut SeededRng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Order-statistic quantile with linear interpolation between adjacent
/// ranks (the common "type 7" rule); input must be sorted ascending.
fn empirical_quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    let h = prob * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// One retained factor in the final report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSummary {
    /// Factor index in the fitted state.
    pub factor: usize,
    /// Probability at least one variable loads on this factor.
    pub ppi: f64,
    /// Components needed to reach the cumulative PVE threshold.
    pub n_components: usize,
    /// Empirical score variances, non-increasing.
    pub eigenvalues: Vec<f64>,
    pub pve: Vec<f64>,
    /// `[component][grid point]`, orthonormal under trapezoid quadrature.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `[subject][component]` rotated scores.
    pub scores: Vec<Vec<f64>>,
}

/// Provenance of a fit, echoed into serialized output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetadata {
    pub n_subjects: usize,
    pub n_variables: usize,
    pub spline_degree: usize,
    /// Penalized design columns (total columns are this plus two).
    pub penalized_cols: usize,
    pub interior_knots: Vec<f64>,
    pub rng_algorithm: String,
    pub hyper: Hyperparameters,
}

/// Complete post-processed fit: everything reports and downstream evaluation
/// need, serializable as a single JSON document.
///
/// `factors` holds the retained factors only (inclusion probability above
/// the median-probability threshold); a retained factor whose grid
/// covariance is numerically rank zero is dropped from the list as inactive.
/// `factor_ppi`, loadings, means, and noise cover all fitted indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Uniform evaluation grid on [0, 1].
    pub dense_grid: Vec<f64>,
    pub factors: Vec<FactorSummary>,
    /// Per-factor inclusion probability, all `q_max` factors.
    pub factor_ppi: Vec<f64>,
    /// `[variable][factor]` posterior inclusion probabilities γ*.
    pub inclusion_probs: Vec<Vec<f64>>,
    /// `[variable][factor]` posterior loading means E[b].
    pub loading_means: Vec<Vec<f64>>,
    /// `[variable][grid point]` posterior-mean curves.
    pub mean_curves: Vec<Vec<f64>>,
    /// Posterior-mean observation noise variance per variable.
    pub noise_variances: Vec<f64>,
    pub status: FitStatus,
    pub elbo_trace: ElboTrace,
    pub metadata: FitMetadata,
}

/// Rotates, truncates, and selects factors of a finished fit, assembling the
/// serializable report.
pub fn summarize_fit(output: &FitOutput) -> Result<FitResult, PostprocessError> {
    let state = &output.state;
    let hyper = &output.hyper;
    let grid = dense_grid(hyper.dense_grid_size)?;
    let design = output.basis.design(&grid);
    let weights = trapezoid_weights(&grid);

    let selection = select_factors(state, DEFAULT_PPI_THRESHOLD);
    let mut factors = Vec::with_capacity(selection.retained.len());
    for &q in &selection.retained {
        let rotated = match rotate_factor(state, &design, &weights, q) {
            Ok(r) => r,
            // Retained by loading probabilities but numerically flat on the
            // grid: treat as inactive rather than failing the whole report.
            Err(PostprocessError::DegenerateFactor { .. }) => continue,
            Err(other) => return Err(other),
        };
        let pve = compute_pve(&rotated.eigenvalues, q)?;
        let n_components = select_components(&pve, DEFAULT_PVE_THRESHOLD);
        factors.push(FactorSummary {
            factor: q,
            ppi: selection.ppi[q],
            n_components,
            eigenvalues: rotated.eigenvalues.clone(),
            pve,
            eigenfunctions: (0..state.l_max)
                .map(|l| rotated.eigenfunctions.column(l).iter().copied().collect())
                .collect(),
            scores: (0..state.n_subjects())
                .map(|i| rotated.scores.row(i).iter().copied().collect())
                .collect(),
        });
    }

    let inclusion_probs: Vec<Vec<f64>> = state
        .loadings
        .iter()
        .map(|row| row.iter().map(|b| b.gamma).collect())
        .collect();
    let loading_means: Vec<Vec<f64>> = state
        .loadings
        .iter()
        .map(|row| row.iter().map(|b| b.e_b()).collect())
        .collect();
    let mean_curves: Vec<Vec<f64>> = (0..state.p())
        .map(|j| {
            (&design * &state.mean_coeffs[j].mean)
                .iter()
                .copied()
                .collect()
        })
        .collect();
    let noise_variances: Vec<f64> = state
        .noise
        .iter()
        .map(|b| b.e_x().unwrap_or(b.rate / b.shape))
        .collect();

    Ok(FitResult {
        dense_grid: grid,
        factors,
        factor_ppi: selection.ppi,
        inclusion_probs,
        loading_means,
        mean_curves,
        noise_variances,
        status: output.status,
        elbo_trace: output.trace.clone(),
        metadata: FitMetadata {
            n_subjects: state.n_subjects(),
            n_variables: state.p(),
            spline_degree: output.basis.degree,
            penalized_cols: output.basis.k_prime,
            interior_knots: output.basis.interior_knots.clone(),
            rng_algorithm: rng::RNG_ALGORITHM.to_string(),
            hyper: hyper.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dense_grid_is_uniform_and_guards_size() {
        let grid = dense_grid(5).unwrap();
        assert_eq!(grid, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(dense_grid(1), Err(PostprocessError::GridTooSmall(1)));
    }

    #[test]
    fn trapezoid_weights_integrate_constants_and_lines() {
        let grid = dense_grid(100).unwrap();
        let w = trapezoid_weights(&grid);
        assert_relative_eq!(w.sum(), 1.0, epsilon = 1e-14);
        let linear: f64 = grid.iter().zip(w.iter()).map(|(t, w)| t * w).sum();
        assert_relative_eq!(linear, 0.5, epsilon = 1e-14);
        // Interior weights equal the spacing, endpoints half of it.
        assert_relative_eq!(w[0], 0.5 / 99.0, epsilon = 1e-16);
        assert_relative_eq!(w[50], 1.0 / 99.0, epsilon = 1e-16);
    }

    #[test]
    fn pve_normalizes_eigenvalues() {
        let pve = compute_pve(&[3.0, 1.0, 0.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(pve, vec![0.75, 0.25, 0.0, 0.0, 0.0]);
        let pve = compute_pve(&[2.5, 0.0, 0.0], 0).unwrap();
        assert_eq!(pve, vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            compute_pve(&[0.0, 0.0], 3),
            Err(PostprocessError::DegenerateFactor { factor: 3, .. })
        ));
    }

    #[test]
    fn component_count_is_smallest_prefix_reaching_threshold() {
        assert_eq!(select_components(&[0.75, 0.25, 0.0, 0.0, 0.0], 0.99), 2);
        assert_eq!(select_components(&[1.0, 0.0], 0.99), 1);
        assert_eq!(select_components(&[0.5, 0.3, 0.15, 0.04, 0.01], 0.99), 4);
        // Monotone in the threshold.
        let pve = [0.6, 0.2, 0.1, 0.07, 0.03];
        let mut prev = 0;
        for threshold in [0.1, 0.5, 0.75, 0.9, 0.97, 0.999] {
            let l = select_components(&pve, threshold);
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn factor_ppi_matches_closed_forms() {
        use crate::inference::SpikeSlabBlock;
        let block = |gamma: f64| SpikeSlabBlock {
            gamma,
            slab_mean: 0.0,
            slab_var: 1.0,
        };
        // Two variables at 0.9 on factor 0, nothing on factor 1.
        let mut state = test_support::blank_state(2, 3, 2, 1, 4);
        state.loadings[0][0] = block(0.9);
        state.loadings[1][0] = block(0.9);
        let sel = select_factors(&state, 0.5);
        assert_relative_eq!(sel.ppi[0], 0.99, epsilon = 1e-12);
        assert_relative_eq!(sel.ppi[1], 0.0);
        assert_eq!(sel.retained, vec![0]);

        // A thousand weak loadings: 1 - 0.999^1000, still retained.
        let mut state = test_support::blank_state(1000, 3, 1, 1, 4);
        for j in 0..1000 {
            state.loadings[j][0] = block(0.001);
        }
        let sel = select_factors(&state, 0.5);
        assert_relative_eq!(sel.ppi[0], 1.0 - 0.999f64.powi(1000), epsilon = 1e-12);
        assert!(sel.retained == vec![0] && sel.ppi[0] > 0.63 && sel.ppi[0] < 0.64);

        // Certain inclusion stays exactly 1 even at huge p.
        let mut state = test_support::blank_state(3, 3, 1, 1, 4);
        state.loadings[1][0] = block(1.0);
        assert_eq!(select_factors(&state, 0.5).ppi[0], 1.0);
    }

    #[test]
    fn ppi_is_invariant_to_variable_order() {
        use crate::inference::SpikeSlabBlock;
        let gammas = [0.1, 0.7, 0.3, 0.05];
        let mut forward = test_support::blank_state(4, 3, 1, 1, 4);
        let mut backward = forward.clone();
        for (j, &gamma) in gammas.iter().enumerate() {
            forward.loadings[j][0].gamma = gamma;
            backward.loadings[gammas.len() - 1 - j][0] = SpikeSlabBlock {
                gamma,
                slab_mean: 0.0,
                slab_var: 1.0,
            };
        }
        assert_relative_eq!(
            select_factors(&forward, 0.5).ppi[0],
            select_factors(&backward, 0.5).ppi[0],
            epsilon = 1e-15
        );
    }

    #[test]
    fn quantile_interpolates_order_statistics() {
        let sorted: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_relative_eq!(empirical_quantile(&sorted, 0.5), 50.0);
        assert_relative_eq!(empirical_quantile(&sorted, 0.0), 0.0);
        assert_relative_eq!(empirical_quantile(&sorted, 1.0), 100.0);
        let four = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(empirical_quantile(&four, 0.5), 2.5);
        assert_relative_eq!(empirical_quantile(&four, 0.975), 3.925);
    }

    /// State builders for the unit tests above.
    pub mod test_support {
        use nalgebra::{DMatrix, DVector};

        use crate::inference::{
            BetaBlock, GaussianBlock, IgBlock, SpikeSlabBlock, VariationalState,
        };

        /// State with every mean zero, every covariance zero, loadings off,
        /// and neutral variance factors — a blank slate tests overwrite.
        pub fn blank_state(
            p: usize,
            n: usize,
            q_max: usize,
            l_max: usize,
            k: usize,
        ) -> VariationalState {
            let zero = |dim: usize| GaussianBlock {
                mean: DVector::zeros(dim),
                cov: DMatrix::zeros(dim, dim),
            };
            let point_ig = IgBlock {
                shape: 1e12,
                rate: 1e12,
            };
            VariationalState {
                k,
                k_prime: k - 2,
                q_max,
                l_max,
                mean_coeffs: vec![zero(k); p],
                eigen_coeffs: vec![vec![zero(k); l_max]; q_max],
                scores: vec![vec![zero(l_max); q_max]; n],
                noise: vec![point_ig; p],
                noise_aux: vec![point_ig; p],
                smooth_mean: vec![point_ig; p],
                smooth_mean_aux: vec![point_ig; p],
                smooth_eigen: vec![vec![point_ig; l_max]; q_max],
                smooth_eigen_aux: vec![vec![point_ig; l_max]; q_max],
                loadings: vec![
                    vec![
                        SpikeSlabBlock {
                            gamma: 0.0,
                            slab_mean: 0.0,
                            slab_var: 0.0,
                        };
                        q_max
                    ];
                    p
                ],
                sparsity: vec![BetaBlock { a: 1.0, b: 1.0 }; q_max],
            }
        }
    }
}

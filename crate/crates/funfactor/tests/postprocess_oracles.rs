//! Oracle tests for factor rotation, selection, and prediction bands.
//!
//! States are built by hand so every expected value has an independent
//! source: exact constructions for fixed points, small dense eigenproblems
//! for cross-checks, and analytic Gaussian quantiles for band bounds.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use funfactor::inference::{
    BetaBlock, ElboTrace, FitOutput, FitStatus, GaussianBlock, IgBlock, SpikeSlabBlock,
    VariationalState,
};
use funfactor::postprocess::{
    bands_for_variable, compute_pve, dense_grid, orthonormalize_factor, orthonormalize_factors,
    predict_trajectory_bands, summarize_fit, trapezoid_weights,
};
use funfactor::splines::SplineBasis;
use funfactor::{Hyperparameters, PostprocessError};

/// State with every mean zero, every covariance zero, loadings off, and
/// point-mass variance factors — a blank slate each test overwrites.
fn blank_state(p: usize, n: usize, q_max: usize, l_max: usize, k: usize) -> VariationalState {
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

fn uniform_basis(k_prime: usize) -> SplineBasis {
    let times: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
    SplineBasis::build_with_k(&times, k_prime).unwrap()
}

fn random_vec(rng: &mut funfactor::rng::SeededRng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)))
}

fn weighted_inner(w: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (0..w.len()).map(|t| w[t] * a[t] * b[t]).sum()
}

/// Coefficient vectors whose curves are orthonormal in the trapezoid inner
/// product on `grid` (Gram–Schmidt on random spline coefficients).
fn orthonormal_coefs(
    basis: &SplineBasis,
    grid: &[f64],
    seed: u64,
    count: usize,
) -> Vec<DVector<f64>> {
    let design = basis.design(grid);
    let w = trapezoid_weights(grid);
    let mut rng = funfactor::rng::stream(seed, 99);
    let k = basis.num_cols();
    let mut coefs: Vec<DVector<f64>> = Vec::new();
    while coefs.len() < count {
        let mut coef = DVector::from_iterator(
            k,
            (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        for prev in &coefs {
            let overlap = weighted_inner(&w, &(&design * &coef), &(&design * prev));
            coef -= prev * overlap;
        }
        let norm = weighted_inner(&w, &(&design * &coef), &(&design * &coef)).sqrt();
        coef /= norm;
        coefs.push(coef);
    }
    coefs
}

/// Asserts `got` equals `want` up to a global sign and returns that sign.
fn sign_matching(got: &DVector<f64>, want: &DVector<f64>, tol: f64, what: &str) -> f64 {
    let sign = if got.dot(want) >= 0.0 { 1.0 } else { -1.0 };
    let diff = (got - want * sign).amax();
    assert!(diff < tol, "{what}: max deviation {diff:.3e} (sign {sign})");
    sign
}

/// Fixed point: already-orthonormal components with exactly uncorrelated
/// scores of second moments (4, 1) come back unchanged up to sign, and the
/// reported eigenvalues are exactly those variances.
#[test]
fn orthonormal_input_is_a_fixed_point() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let n = 50;
    let grid = dense_grid(80).unwrap();
    let coefs = orthonormal_coefs(&basis, &grid, 4, 2);
    let design = basis.design(&grid);

    let mut rng = funfactor::rng::stream(4, 7);
    let mut z = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
    // Make the columns exactly orthogonal with second moments (4, 1).
    let proj = z.column(0).dot(&z.column(1)) / z.column(0).norm_squared();
    let adjusted = z.column(1) - z.column(0) * proj;
    z.set_column(1, &adjusted);
    let s1 = (4.0 * n as f64 / z.column(0).norm_squared()).sqrt();
    let s2 = (n as f64 / z.column(1).norm_squared()).sqrt();
    z.column_mut(0).scale_mut(s1);
    z.column_mut(1).scale_mut(s2);

    let mut state = blank_state(1, n, 1, 2, k);
    for l in 0..2 {
        state.eigen_coeffs[0][l].mean = coefs[l].clone();
    }
    for i in 0..n {
        state.scores[i][0].mean = DVector::from_vec(vec![z[(i, 0)], z[(i, 1)]]);
    }

    let rotated = orthonormalize_factor(&state, &basis, &grid, 0).unwrap();
    assert!((rotated.eigenvalues[0] - 4.0).abs() < 1e-8);
    assert!((rotated.eigenvalues[1] - 1.0).abs() < 1e-8);
    for l in 0..2 {
        let want = &design * &coefs[l];
        let got = rotated.eigenfunctions.column(l).clone_owned();
        let sign = sign_matching(&got, &want, 1e-8, "eigenfunction");
        let got_scores = rotated.scores.column(l).clone_owned();
        let want_scores = z.column(l).clone_owned();
        let score_sign = sign_matching(&got_scores, &want_scores, 1e-8, "scores");
        assert_eq!(sign, score_sign, "function and score signs must flip together");
    }
}

/// Joint invertible mixing of scores and components describes the same
/// trajectories, so the rotation output must not move (up to sign).
#[test]
fn rotation_is_invariant_to_joint_mixing() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let n = 40;
    let grid = dense_grid(70).unwrap();
    let coefs = orthonormal_coefs(&basis, &grid, 11, 2);

    let mut rng = funfactor::rng::stream(11, 3);
    let mut base = blank_state(1, n, 1, 2, k);
    for l in 0..2 {
        base.eigen_coeffs[0][l].mean = coefs[l].clone();
    }
    for i in 0..n {
        let z1 = 2.0 * rng.sample::<f64, _>(StandardNormal);
        let z2 = rng.sample::<f64, _>(StandardNormal);
        base.scores[i][0].mean = DVector::from_vec(vec![z1, z2]);
    }
    let reference = orthonormalize_factor(&base, &basis, &grid, 0).unwrap();

    for trial in 0..12u64 {
        let mut rng = funfactor::rng::stream(100 + trial, 0);
        // Diagonally dominant, hence invertible, random mixing.
        let a = DMatrix::from_fn(2, 2, |r, c| {
            let noise: f64 = rng.random::<f64>() * 2.0 - 1.0;
            noise + if r == c { 2.0 } else { 0.0 }
        });
        let a_inv = a.clone().try_inverse().expect("mixing is invertible");

        let mut mixed = base.clone();
        // scores m -> A m; component coefficients V -> V A^{-1}.
        for i in 0..n {
            mixed.scores[i][0].mean = &a * &base.scores[i][0].mean;
        }
        let v = base.eigen_mean_matrix(0);
        let v_mixed = &v * &a_inv;
        for l in 0..2 {
            mixed.eigen_coeffs[0][l].mean = v_mixed.column(l).clone_owned();
        }

        let rotated = orthonormalize_factor(&mixed, &basis, &grid, 0).unwrap();
        for l in 0..2 {
            let rel = (rotated.eigenvalues[l] - reference.eigenvalues[l]).abs()
                / reference.eigenvalues[l];
            assert!(rel < 1e-6, "trial {trial}: eigenvalue {l} moved by {rel:.3e}");
            let sign = sign_matching(
                &rotated.eigenfunctions.column(l).clone_owned(),
                &reference.eigenfunctions.column(l).clone_owned(),
                1e-6,
                "mixed eigenfunction",
            );
            sign_matching(
                &(rotated.scores.column(l) * sign).clone_owned(),
                &reference.scores.column(l).clone_owned(),
                1e-6,
                "mixed scores",
            );
        }
    }
}

/// Scores drawn with variances (1, 1/4): recovered eigenvalues must agree
/// with the dense 2x2 second-moment eigenvalues to near machine precision,
/// and their ratio must sit near 4 (up to sampling error at N = 100).
#[test]
fn eigenvalue_ratio_tracks_score_variances() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let n = 100;
    let grid = dense_grid(100).unwrap();
    let coefs = orthonormal_coefs(&basis, &grid, 21, 2);

    let mut rng = funfactor::rng::stream(21, 5);
    let mut state = blank_state(1, n, 1, 2, k);
    let mut z = DMatrix::zeros(n, 2);
    for i in 0..n {
        z[(i, 0)] = rng.sample::<f64, _>(StandardNormal);
        z[(i, 1)] = 0.5 * rng.sample::<f64, _>(StandardNormal);
        state.scores[i][0].mean = DVector::from_vec(vec![z[(i, 0)], z[(i, 1)]]);
    }
    for l in 0..2 {
        state.eigen_coeffs[0][l].mean = coefs[l].clone();
    }

    let rotated = orthonormalize_factor(&state, &basis, &grid, 0).unwrap();

    // Oracle: with orthonormal components, the trajectory second-moment
    // operator has the same nonzero spectrum as the 2x2 score moment matrix.
    let m2 = z.transpose() * &z / n as f64;
    let mut dense_eigs: Vec<f64> = m2.symmetric_eigen().eigenvalues.iter().copied().collect();
    dense_eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for l in 0..2 {
        assert!(
            (rotated.eigenvalues[l] - dense_eigs[l]).abs() < 1e-8,
            "eigenvalue {l}: {} vs dense {}",
            rotated.eigenvalues[l],
            dense_eigs[l]
        );
    }
    let ratio = rotated.eigenvalues[0] / rotated.eigenvalues[1];
    assert!(
        (2.8..=5.8).contains(&ratio),
        "ratio {ratio} strays too far from the population value 4"
    );
}

/// On an arbitrary (non-orthonormal) state the rotation must still deliver
/// an orthonormal basis that reproduces every trajectory exactly, with
/// non-increasing eigenvalues and PVE summing to one.
#[test]
fn rotation_invariants_hold_for_messy_states() {
    let basis = uniform_basis(8);
    let k = basis.num_cols();
    let (n, q_max, l_max) = (15, 2, 3);
    let g = 100;
    let grid = dense_grid(g).unwrap();
    let design = basis.design(&grid);
    let w = trapezoid_weights(&grid);

    let mut rng = funfactor::rng::stream(33, 0);
    let mut state = blank_state(3, n, q_max, l_max, k);
    for q in 0..q_max {
        for l in 0..l_max {
            state.eigen_coeffs[q][l].mean = DVector::from_iterator(
                k,
                (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
        }
        for i in 0..n {
            state.scores[i][q].mean = DVector::from_iterator(
                l_max,
                (0..l_max).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
        }
    }

    for per_factor in orthonormalize_factors(&state, &basis, g).unwrap() {
        let rotated = per_factor.unwrap();
        let q = rotated.factor;

        for a in 0..l_max {
            for b in 0..l_max {
                let gram = weighted_inner(
                    &w,
                    &rotated.eigenfunctions.column(a).clone_owned(),
                    &rotated.eigenfunctions.column(b).clone_owned(),
                );
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (gram - want).abs() < 1e-10,
                    "factor {q} Gram[{a},{b}] = {gram}"
                );
            }
        }

        let reconstructed = &rotated.scores * rotated.eigenfunctions.transpose();
        for i in 0..n {
            let original = (&design * state.factor_coef(i, q)).transpose();
            let diff = (reconstructed.row(i) - original).amax();
            assert!(diff < 1e-8, "factor {q} subject {i}: rotation lost {diff:.3e}");
        }

        for pair in rotated.eigenvalues.windows(2) {
            assert!(pair[0] >= pair[1], "eigenvalues must be non-increasing");
        }
        assert!(rotated.eigenvalues.iter().all(|&l| l >= 0.0));
        let pve = compute_pve(&rotated.eigenvalues, q).unwrap();
        assert!((pve.iter().sum::<f64>() - 1.0).abs() < 1e-10);

        for l in 0..l_max {
            let integral = weighted_inner(
                &w,
                &rotated.eigenfunctions.column(l).clone_owned(),
                &DVector::from_element(g, 1.0),
            );
            assert!(integral >= 0.0, "sign convention: ∫ψ = {integral} < 0");
        }
    }
}

#[test]
fn flat_factor_is_reported_degenerate() {
    let basis = uniform_basis(7);
    let state = blank_state(2, 5, 2, 2, basis.num_cols());
    let grid = dense_grid(60).unwrap();
    match orthonormalize_factor(&state, &basis, &grid, 1) {
        Err(PostprocessError::DegenerateFactor { factor, .. }) => assert_eq!(factor, 1),
        other => panic!("expected DegenerateFactor, got {other:?}"),
    }
}

/// All variances forced to zero: every Monte-Carlo draw is the mean curve,
/// so the band collapses onto it.
#[test]
fn bands_collapse_when_all_variances_vanish() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let mut state = blank_state(2, 3, 1, 2, k);

    let mut rng = funfactor::rng::stream(55, 0);
    state.mean_coeffs[0].mean = random_vec(&mut rng, k, 1.0);
    state.eigen_coeffs[0][0].mean = random_vec(&mut rng, k, 0.8);
    state.eigen_coeffs[0][1].mean = random_vec(&mut rng, k, 0.5);
    state.scores[1][0].mean = DVector::from_vec(vec![1.2, -0.4]);
    state.loadings[0][0] = SpikeSlabBlock {
        gamma: 1.0,
        slab_mean: 0.7,
        slab_var: 0.0,
    };
    // Noise variance concentrated at (numerically) zero.
    state.noise[0] = IgBlock {
        shape: 1.0,
        rate: 1e-290,
    };

    let grid = dense_grid(40).unwrap();
    let band = predict_trajectory_bands(&state, &basis, 0, 1, &grid, 0.95, 500, 9);

    // Independent mean-curve construction.
    let design = basis.design(&grid);
    let coef = &state.mean_coeffs[0].mean
        + (state.eigen_coeffs[0][0].mean.clone() * 1.2
            - state.eigen_coeffs[0][1].mean.clone() * 0.4)
            * 0.7;
    let want = &design * coef;

    for t in 0..grid.len() {
        assert!((band.mean[t] - want[t]).abs() < 1e-12);
        // Degenerate draws all equal the mean curve (up to evaluation
        // rounding), so the band has zero width.
        assert!((band.upper[t] - band.lower[t]).abs() < 1e-12);
        assert!((band.lower[t] - band.mean[t]).abs() < 1e-12);
    }
}

/// Only observation noise is random, with its variance pinned at 0.49: the
/// band bounds must match the analytic Gaussian quantiles ±1.96·0.7.
#[test]
fn band_quantiles_match_analytic_gaussian_bounds() {
    let basis = uniform_basis(7);
    let mut state = blank_state(1, 2, 1, 1, basis.num_cols());
    state.noise[0] = IgBlock {
        shape: 1e10,
        rate: 1e10 * 0.49,
    };

    let grid = dense_grid(5).unwrap();
    let draws = 20_000;
    let band = predict_trajectory_bands(&state, &basis, 0, 0, &grid, 0.95, draws, 123);

    // z_{0.975} * 0.7; Monte-Carlo SE of the quantile is about 0.0133, so a
    // 4-sigma budget is 0.054.
    let want = 1.959964 * 0.7;
    for t in 0..grid.len() {
        assert!(band.mean[t].abs() < 1e-12);
        assert!(
            (band.lower[t] + want).abs() < 0.06,
            "lower[{t}] = {} vs {}",
            band.lower[t],
            -want
        );
        assert!(
            (band.upper[t] - want).abs() < 0.06,
            "upper[{t}] = {} vs {}",
            band.upper[t],
            want
        );
    }
}

/// Average band width is a stable Monte-Carlo estimate: quadrupling the
/// draws (with fresh randomness) moves it by well under 2%.
#[test]
fn band_width_is_stable_in_the_number_of_draws() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let n = 3;
    let mut state = blank_state(1, n, 2, 2, k);

    let mut rng = funfactor::rng::stream(77, 0);
    state.mean_coeffs[0] = GaussianBlock {
        mean: random_vec(&mut rng, k, 1.0),
        cov: DMatrix::identity(k, k) * 0.01,
    };
    for q in 0..2 {
        for l in 0..2 {
            state.eigen_coeffs[q][l] = GaussianBlock {
                mean: random_vec(&mut rng, k, 0.7),
                cov: DMatrix::identity(k, k) * 0.02,
            };
        }
        for i in 0..n {
            state.scores[i][q] = GaussianBlock {
                mean: random_vec(&mut rng, 2, 1.0),
                cov: DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.1])),
            };
        }
        state.loadings[0][q] = SpikeSlabBlock {
            gamma: 1.0,
            slab_mean: 0.9,
            slab_var: 0.04,
        };
    }
    state.noise[0] = IgBlock {
        shape: 40.0,
        rate: 40.0 * 0.25,
    };

    let grid = dense_grid(50).unwrap();
    let mean_width = |draws: usize, seed: u64| -> f64 {
        let band = predict_trajectory_bands(&state, &basis, 0, 1, &grid, 0.95, draws, seed);
        band.upper
            .iter()
            .zip(&band.lower)
            .map(|(u, l)| u - l)
            .sum::<f64>()
            / grid.len() as f64
    };

    let coarse = mean_width(500, 1001);
    let fine = mean_width(2000, 2002);
    let rel = (coarse - fine).abs() / fine;
    assert!(
        rel < 0.02,
        "width moved {:.2}% between 500 and 2000 draws",
        100.0 * rel
    );
}

/// Batched bands for several subjects agree with the single-pair entry
/// point for the first subject and preserve subject order.
#[test]
fn batched_bands_match_single_pair_for_leading_subject() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let mut state = blank_state(2, 4, 1, 1, k);
    let mut rng = funfactor::rng::stream(91, 0);
    state.mean_coeffs[1].mean = random_vec(&mut rng, k, 1.0);
    state.eigen_coeffs[0][0].mean = random_vec(&mut rng, k, 1.0);
    for i in 0..4 {
        state.scores[i][0] = GaussianBlock {
            mean: DVector::from_vec(vec![i as f64 - 1.5]),
            cov: DMatrix::identity(1, 1) * 0.2,
        };
    }
    state.loadings[1][0] = SpikeSlabBlock {
        gamma: 0.9,
        slab_mean: 1.1,
        slab_var: 0.05,
    };
    state.noise[1] = IgBlock {
        shape: 30.0,
        rate: 30.0 * 0.09,
    };

    let grid = dense_grid(25).unwrap();
    let single = predict_trajectory_bands(&state, &basis, 1, 2, &grid, 0.9, 200, 5);
    let batched = bands_for_variable(&state, &basis, 1, &[2, 0, 3], &grid, 0.9, 200, 5);
    assert_eq!(batched.len(), 3);
    assert_eq!(single, batched[0]);
    // Different subjects genuinely differ.
    assert_ne!(batched[0].mean, batched[1].mean);
}

/// End-to-end assembly on a hand-built fit output: retained factors, PVE,
/// grid shapes, and metadata all line up.
#[test]
fn summarize_assembles_a_consistent_report() {
    let basis = uniform_basis(7);
    let k = basis.num_cols();
    let (p, n) = (3, 12);
    let mut state = blank_state(p, n, 2, 2, k);

    let mut rng = funfactor::rng::stream(13, 0);
    for l in 0..2 {
        state.eigen_coeffs[0][l].mean = DVector::from_iterator(
            k,
            (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
    }
    for i in 0..n {
        state.scores[i][0].mean = DVector::from_vec(vec![
            rng.sample::<f64, _>(StandardNormal),
            0.5 * rng.sample::<f64, _>(StandardNormal),
        ]);
    }
    for j in 0..p {
        state.mean_coeffs[j].mean = DVector::from_iterator(
            k,
            (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)),
        );
        // Factor 0 clearly active, factor 1 clearly off.
        state.loadings[j][0] = SpikeSlabBlock {
            gamma: 0.95,
            slab_mean: 1.0,
            slab_var: 0.1,
        };
        state.noise[j] = IgBlock {
            shape: 5.0,
            rate: 8.0,
        };
    }

    let hyper = Hyperparameters {
        dense_grid_size: 60,
        q_max: 2,
        l_max: 2,
        ..Hyperparameters::default()
    };
    let output = FitOutput {
        state,
        basis,
        trace: ElboTrace::default(),
        status: FitStatus::Converged,
        hyper,
    };

    let result = summarize_fit(&output).unwrap();
    assert_eq!(result.dense_grid.len(), 60);
    assert_eq!(result.factor_ppi.len(), 2);
    assert!(result.factor_ppi[0] > 0.99 && result.factor_ppi[1] == 0.0);
    assert_eq!(result.factors.len(), 1);

    let summary = &result.factors[0];
    assert_eq!(summary.factor, 0);
    assert_eq!(summary.eigenfunctions.len(), 2);
    assert_eq!(summary.eigenfunctions[0].len(), 60);
    assert_eq!(summary.scores.len(), 12);
    assert!((summary.pve.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    assert!(summary.eigenvalues[0] >= summary.eigenvalues[1]);
    assert!(summary.n_components >= 1 && summary.n_components <= 2);

    assert_eq!(result.inclusion_probs.len(), 3);
    assert_eq!(result.loading_means[0].len(), 2);
    assert!((result.loading_means[0][0] - 0.95).abs() < 1e-12);
    assert_eq!(result.mean_curves.len(), 3);
    assert_eq!(result.mean_curves[0].len(), 60);
    // IG(5, 8) mean is 8/4 = 2.
    assert!((result.noise_variances[0] - 2.0).abs() < 1e-12);
    assert_eq!(result.metadata.n_subjects, 12);
    assert_eq!(result.metadata.n_variables, 3);
    assert_eq!(result.metadata.penalized_cols, 7);
    assert_eq!(result.metadata.rng_algorithm, "chacha12");

    // The report round-trips through JSON.
    let json = serde_json::to_string(&result).unwrap();
    let back: funfactor::FitResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back.dense_grid, result.dense_grid, "dense_grid");
    assert_eq!(back.factors, result.factors, "factors");
    assert_eq!(back.factor_ppi, result.factor_ppi, "ppi");
    assert_eq!(back.inclusion_probs, result.inclusion_probs, "incl");
    assert_eq!(back.loading_means, result.loading_means, "lm");
    assert_eq!(back.mean_curves, result.mean_curves, "mc");
    assert_eq!(back.noise_variances, result.noise_variances, "nv");
    assert_eq!(back.status, result.status, "status");
    assert_eq!(back.elbo_trace, result.elbo_trace, "trace");
    assert_eq!(back.metadata, result.metadata, "meta");
}

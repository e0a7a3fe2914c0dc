//! Checks of the synthetic-data generator against independently computed
//! expectations: quadrature orthonormality, exact reassembly of observed
//! values from the recorded truth, and Monte Carlo laws for the random
//! draws.

use funfactor::postprocess::trapezoid_weights;
use funfactor::simulate::{generate_dataset, generate_eigenfunctions, MeanKind, SimConfig, Sparsity};

fn small_config() -> SimConfig {
    SimConfig {
        n_subjects: 6,
        p: 5,
        q: 2,
        l: 2,
        n_range: (2, 4),
        sparsity: Sparsity::Beta { a: 1.0, b: 1.0 },
        mean_kind: MeanKind::Periodic,
        noise_sd: 0.7,
        eigen_degrees: vec![2, 3],
        grid_size: 50,
        seed: 42,
    }
}

/// The component functions must form an orthonormal set in the trapezoid
/// inner product on the generating grid.
#[test]
fn gram_matrix_of_generated_components_is_identity() {
    let grid: Vec<f64> = (0..150).map(|g| g as f64 / 149.0).collect();
    let weights = trapezoid_weights(&grid);
    let sets = generate_eigenfunctions(4, 5, &[2, 3], &grid, 314).unwrap();
    assert_eq!(sets.len(), 4);
    for set in &sets {
        assert!([2, 3].contains(&set.degree));
        assert_eq!(set.values.len(), 5);
        for a in 0..5 {
            for b in 0..5 {
                let inner: f64 = set.values[a]
                    .iter()
                    .zip(&set.values[b])
                    .zip(weights.iter())
                    .map(|((x, y), w)| x * y * w)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (inner - want).abs() < 1e-8,
                    "Gram entry ({a}, {b}) = {inner}"
                );
            }
        }
    }
}

/// Every observed value must equal mean + loadings x factors + noise as
/// reconstructed from the recorded truth, and the structural shapes must
/// line up with the config.
#[test]
fn observed_values_reassemble_exactly_from_truth() {
    let cfg = small_config();
    let (data, truth) = generate_dataset(&cfg).unwrap();

    assert_eq!(data.n_subjects(), cfg.n_subjects);
    assert_eq!(data.p, cfg.p);
    assert_eq!(truth.n_subjects(), cfg.n_subjects);
    assert_eq!(truth.n_variables(), cfg.p);
    assert_eq!(truth.n_factors(), cfg.q);
    assert_eq!(truth.grid.len(), cfg.grid_size);
    for set in &truth.eigen_bases {
        assert!(cfg.eigen_degrees.contains(&set.degree));
        assert_eq!(set.len(), cfg.l);
    }

    for (i, subject) in data.subjects.iter().enumerate() {
        assert_eq!(subject.times, truth.times[i]);
        for (r, &t) in subject.times.iter().enumerate() {
            for j in 0..cfg.p {
                let rebuilt = truth.signal_at(i, j, t) + truth.noise[i][(r, j)];
                let got = subject.values[(r, j)];
                assert!(
                    (got - rebuilt).abs() <= 1e-12,
                    "subject {i}, obs {r}, variable {j}: {got} vs {rebuilt}"
                );
            }
        }
    }
}

/// The tabulated truth curves must agree with off-grid evaluation at the
/// grid points, and evaluation must stay finite between them.
#[test]
fn tabulated_values_match_continuous_evaluation() {
    let (_, truth) = generate_dataset(&small_config()).unwrap();
    for set in &truth.eigen_bases {
        for (g, &t) in truth.grid.iter().enumerate() {
            let at = set.values_at(t);
            for l in 0..set.len() {
                assert!(
                    (set.values[l][g] - at[l]).abs() < 1e-12,
                    "component {l} at grid point {g}"
                );
            }
        }
        // Probe between grid points: a spline stays bounded and finite.
        for step in 0..500 {
            let t = (step as f64 + 0.5) / 500.0;
            for v in set.values_at(t) {
                assert!(v.is_finite());
                assert!(v.abs() < 100.0, "wild component value {v} at t = {t}");
            }
        }
    }
}

/// Observation counts stay inside the configured bounds and times arrive
/// sorted inside the unit interval.
#[test]
fn observation_counts_and_times_respect_config() {
    let cfg = SimConfig {
        n_subjects: 40,
        n_range: (2, 10),
        ..small_config()
    };
    let (data, _) = generate_dataset(&cfg).unwrap();
    for subject in &data.subjects {
        let n_i = subject.times.len();
        assert!((2..=10).contains(&n_i), "n_i = {n_i}");
        for window in subject.times.windows(2) {
            assert!(window[0] <= window[1]);
        }
        for &t in &subject.times {
            assert!((0.0..1.0).contains(&t));
        }
    }
    // With 40 subjects, the count range should actually be exercised.
    let counts: Vec<usize> = data.subjects.iter().map(|s| s.times.len()).collect();
    assert!(counts.iter().min() != counts.iter().max(), "counts never varied");
}

/// Component scores are drawn with variance 1/l^2 (1-based l). With
/// 20,000 independent draws per component the mean square must land
/// within three Monte Carlo standard errors of the target.
#[test]
fn score_variances_match_their_inverse_square_law() {
    let cfg = SimConfig {
        n_subjects: 20_000,
        p: 1,
        q: 1,
        l: 3,
        n_range: (1, 1),
        sparsity: Sparsity::Dense,
        mean_kind: MeanKind::Zero,
        noise_sd: 1.0,
        eigen_degrees: vec![2, 3],
        grid_size: 20,
        seed: 9001,
    };
    let (_, truth) = generate_dataset(&cfg).unwrap();
    let n = cfg.n_subjects as f64;
    for l in 0..cfg.l {
        let target = 1.0 / ((l + 1) * (l + 1)) as f64;
        let mean_square: f64 = truth.scores[0]
            .iter()
            .map(|subject| subject[l] * subject[l])
            .sum::<f64>()
            / n;
        // Var(z^2) = 2 sigma^4 for centered Gaussians.
        let se = target * (2.0 / n).sqrt();
        assert!(
            (mean_square - target).abs() < 3.0 * se,
            "component {l}: mean square {mean_square}, target {target}, se {se}"
        );
    }
}

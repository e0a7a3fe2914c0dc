//! Alignment and evaluation checks against constructed cases where the
//! correct answer is known by design: a fit assembled directly from the
//! simulation truth must align to the identity, score zero trajectory
//! error, and survive factor shuffles, sign flips, and in-factor mixing.

use funfactor::data::Hyperparameters;
use funfactor::inference::{ElboTrace, FitStatus};
use funfactor::metrics::{
    align_components, loading_auc, mean_trajectory_ise, AlignmentMap,
};
use funfactor::postprocess::{FactorSummary, FitMetadata, FitResult};
use funfactor::simulate::{generate_dataset, MeanKind, SimConfig, SimTruth, Sparsity};

fn truth_config() -> SimConfig {
    SimConfig {
        n_subjects: 25,
        p: 40,
        q: 2,
        l: 2,
        n_range: (3, 6),
        sparsity: Sparsity::Beta { a: 1.0, b: 2.0 },
        mean_kind: MeanKind::Periodic,
        noise_sd: 0.5,
        eigen_degrees: vec![2, 3],
        grid_size: 60,
        seed: 2024,
    }
}

/// A "perfect" fit whose factors are the truth itself.
fn fit_from_truth(truth: &SimTruth) -> FitResult {
    let q = truth.n_factors();
    let n = truth.n_subjects();
    let p = truth.n_variables();
    let factors: Vec<FactorSummary> = (0..q)
        .map(|qi| {
            let l = truth.eigen_bases[qi].len();
            FactorSummary {
                factor: qi,
                ppi: 1.0,
                n_components: l,
                eigenvalues: vec![1.0; l],
                pve: vec![1.0 / l as f64; l],
                eigenfunctions: truth.eigen_bases[qi].values.clone(),
                scores: (0..n).map(|i| truth.scores[qi][i].clone()).collect(),
            }
        })
        .collect();
    FitResult {
        dense_grid: truth.grid.clone(),
        factors,
        factor_ppi: vec![1.0; q],
        inclusion_probs: truth
            .support
            .iter()
            .map(|row| row.iter().map(|&s| if s { 0.99 } else { 0.01 }).collect())
            .collect(),
        loading_means: truth.loadings.clone(),
        mean_curves: truth.means.clone(),
        noise_variances: vec![truth.noise_sd * truth.noise_sd; p],
        status: FitStatus::Converged,
        elbo_trace: ElboTrace {
            records: Vec::new(),
        },
        metadata: FitMetadata {
            n_subjects: n,
            n_variables: p,
            spline_degree: 3,
            penalized_cols: 8,
            interior_knots: Vec::new(),
            rng_algorithm: "chacha12".to_string(),
            hyper: Hyperparameters::default(),
        },
    }
}

fn mean_matched_corr(map: &AlignmentMap) -> f64 {
    let (mut total, mut count) = (0.0, 0usize);
    for m in &map.matches {
        for c in &m.components {
            total += c.score_corr;
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn truth_aligned_to_itself_is_the_identity_with_positive_signs() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();
    let est = fit_from_truth(&truth);
    let map = align_components(&est, &truth);

    assert!(map.missed_truth_factors.is_empty());
    assert!(map.unmatched_est_factors.is_empty());
    assert_eq!(map.matches.len(), truth.n_factors());
    for (k, m) in map.matches.iter().enumerate() {
        assert_eq!(m.est_index, k);
        assert_eq!(m.truth_factor, k, "factor permutation must be identity");
        for (l, c) in m.components.iter().enumerate() {
            assert_eq!(c.est, l);
            assert_eq!(c.truth, l, "component permutation must be identity");
            assert_eq!(c.sign, 1.0);
            assert!(c.score_corr > 1.0 - 1e-12, "corr = {}", c.score_corr);
        }
    }
}

#[test]
fn swapped_factors_and_negated_component_are_recovered() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();
    let mut est = fit_from_truth(&truth);
    // Present the factors in reverse order and negate the first component
    // of what is now the leading estimated factor (truth factor 1).
    est.factors.reverse();
    for (k, f) in est.factors.iter_mut().enumerate() {
        f.factor = k;
    }
    for row in &mut est.factors[0].scores {
        row[0] = -row[0];
    }
    for v in &mut est.factors[0].eigenfunctions[0] {
        *v = -*v;
    }

    let map = align_components(&est, &truth);
    assert_eq!(map.matches[0].truth_factor, 1, "swap must be detected");
    assert_eq!(map.matches[1].truth_factor, 0);
    assert_eq!(map.matches[0].components[0].sign, -1.0);
    assert_eq!(map.matches[0].components[1].sign, 1.0);
    assert_eq!(map.matches[1].components[0].sign, 1.0);
    for m in &map.matches {
        for c in &m.components {
            assert!(c.score_corr > 1.0 - 1e-12);
        }
    }
}

#[test]
fn orthogonal_mixing_within_a_factor_is_undone_by_alignment() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();
    for (trial, angle) in [0.4f64, 1.2, std::f64::consts::FRAC_PI_2, 2.6]
        .into_iter()
        .enumerate()
    {
        let mut est = fit_from_truth(&truth);
        let (c, s) = (angle.cos(), angle.sin());
        // Rotate scores and eigenfunctions of factor 0 by the same
        // orthogonal map, leaving the factor trajectory invariant.
        for row in &mut est.factors[0].scores {
            let (a, b) = (row[0], row[1]);
            row[0] = c * a - s * b;
            row[1] = s * a + c * b;
        }
        let g = truth.grid.len();
        let old = est.factors[0].eigenfunctions.clone();
        for gi in 0..g {
            est.factors[0].eigenfunctions[0][gi] = c * old[0][gi] - s * old[1][gi];
            est.factors[0].eigenfunctions[1][gi] = s * old[0][gi] + c * old[1][gi];
        }

        // Pre-alignment quality: identity pairing of the mixed components.
        let pre = {
            let id_map = AlignmentMap {
                matches: align_components(&fit_from_truth(&truth), &truth).matches,
                missed_truth_factors: vec![],
                unmatched_est_factors: vec![],
            };
            // Identity pairing on the *mixed* estimate: |corr| of component
            // l against truth component l is |cos(angle)|-damped.
            let mut total = 0.0;
            let mut count = 0;
            for m in &id_map.matches {
                for cmp in &m.components {
                    let est_col: Vec<f64> = est.factors[m.est_index]
                        .scores
                        .iter()
                        .map(|r| r[cmp.est])
                        .collect();
                    let truth_col: Vec<f64> = truth.scores[m.truth_factor]
                        .iter()
                        .map(|r| r[cmp.truth])
                        .collect();
                    total += pearson_abs(&est_col, &truth_col);
                    count += 1;
                }
            }
            total / count as f64
        };

        let map = align_components(&est, &truth);
        let post = mean_matched_corr(&map);
        assert!(
            post >= pre - 1e-12,
            "trial {trial}: alignment made matters worse ({pre} -> {post})"
        );
        // A right-angle rotation is exactly a component swap with a sign,
        // so alignment must fully recover correlation 1.
        if (angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12 {
            assert!(post > 1.0 - 1e-12, "quarter turn not recovered: {post}");
        }
    }
}

fn pearson_abs(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
        sab += (x - ma) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).abs()
}

#[test]
fn missing_and_empty_retentions_are_reported() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();

    // Drop the second factor: it must show up as missed.
    let mut est = fit_from_truth(&truth);
    est.factors.truncate(1);
    let map = align_components(&est, &truth);
    assert_eq!(map.matches.len(), 1);
    assert_eq!(map.matches[0].truth_factor, 0);
    assert_eq!(map.missed_truth_factors, vec![1]);

    // No retained factors at all: empty map, everything missed.
    est.factors.clear();
    let map = align_components(&est, &truth);
    assert!(map.matches.is_empty());
    assert_eq!(map.missed_truth_factors, vec![0, 1]);
}

#[test]
fn perfect_fit_scores_zero_error_and_unit_auc() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();
    let est = fit_from_truth(&truth);
    let map = align_components(&est, &truth);

    let ise = mean_trajectory_ise(&est, &truth).unwrap();
    assert!(ise.abs() < 1e-15, "self-ISE = {ise}");

    let auc = loading_auc(&est.inclusion_probs, &truth.support, &map).unwrap();
    assert_eq!(auc.pooled, 1.0);
    for (_, per) in &auc.per_factor {
        assert_eq!(*per, Some(1.0));
    }
}

#[test]
fn truncated_component_sets_match_only_what_is_retained() {
    let (_, truth) = generate_dataset(&truth_config()).unwrap();
    let mut est = fit_from_truth(&truth);
    est.factors[0].n_components = 1;
    let map = align_components(&est, &truth);
    assert_eq!(map.matches[0].components.len(), 1);
    assert_eq!(map.matches[0].components[0].est, 0);
    assert_eq!(map.matches[0].components[0].truth, 0);
    assert_eq!(map.matches[1].components.len(), 2);
}

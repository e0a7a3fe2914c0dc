//! Penalized O'Sullivan spline basis shared by means and eigenfunctions.
//!
//! The working design for a set of times is `C(t) = [1, t, z_1(t), ..., z_K'(t)]`
//! where the `z` columns are a spectral reparametrization of a clamped cubic
//! B-spline basis: eigendirections of the exact curvature penalty, scaled so
//! the integrated squared second derivative of any function in their span
//! equals the squared Euclidean norm of its coefficients. An isotropic
//! Gaussian prior on the `z` coefficients is then exactly the classical
//! curvature-penalty smoother.

pub mod bspline;

use nalgebra::{DMatrix, DVector};

use crate::error::SplineError;

/// Number of penalized basis columns for a pooled count of distinct
/// observation times: a quarter of the distinct times, at least 7, at most 40.
pub fn choose_num_basis(n_distinct_times: usize) -> usize {
    (n_distinct_times / 4).min(40).max(7)
}

/// Interior knots at equally spaced quantiles of the pooled distinct times.
///
/// Places `k_prime - 2` knots at quantile levels `k / (k_prime - 1)` using
/// linear interpolation of the sorted distinct values. Knots are forced
/// strictly increasing and strictly inside (0, 1); exact collisions are
/// separated by a 1e-9 ladder.
pub fn place_knots(times: &[f64], k_prime: usize) -> Result<Vec<f64>, SplineError> {
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SplineError::DegenerateTimes(distinct.len()));
    }
    let m = k_prime - 2;
    let n = distinct.len();
    let mut knots = Vec::with_capacity(m);
    for k in 1..=m {
        let p = k as f64 / (m + 1) as f64;
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let q = if lo + 1 < n {
            distinct[lo] + frac * (distinct[lo + 1] - distinct[lo])
        } else {
            distinct[n - 1]
        };
        knots.push(q);
    }
    // Keep knots strictly increasing and strictly interior.
    let eps = 1e-9;
    let mut prev = 0.0;
    for knot in knots.iter_mut() {
        if *knot <= prev {
            *knot = prev + eps;
        }
        prev = *knot;
    }
    let hi = 1.0 - eps;
    let mut next = 1.0;
    for knot in knots.iter_mut().rev() {
        if *knot >= next {
            *knot = next - eps;
        }
        next = *knot;
    }
    if knots.first().map_or(false, |&k| k <= 0.0) || knots.last().map_or(false, |&k| k >= hi + eps)
    {
        return Err(SplineError::DegenerateTimes(distinct.len()));
    }
    Ok(knots)
}

/// Spectral map from the raw B-spline basis to penalized columns.
///
/// Eigendecomposes the exact curvature penalty, keeps the directions with
/// positive eigenvalues (everything above `1e-10` relative to the largest),
/// and scales each by the inverse square root of its eigenvalue. The
/// curvature penalty of a raw cubic basis always has a two-dimensional null
/// space (constants and linears), so exactly `n_raw - 2` positive directions
/// are expected; any other count is reported as a rank error.
pub fn osullivan_transform(omega: &DMatrix<f64>) -> Result<OsullivanMap, SplineError> {
    let n_raw = omega.nrows();
    let eig = omega.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n_raw).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let max_eig = eig.eigenvalues[order[0]].max(0.0);
    let threshold = 1e-10 * max_eig;
    let positive: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| eig.eigenvalues[i] > threshold)
        .collect();
    if positive.len() != n_raw - 2 {
        return Err(SplineError::PenaltyRank {
            got: positive.len(),
            expected: n_raw - 2,
            threshold,
        });
    }
    let mut transform = DMatrix::zeros(n_raw, positive.len());
    for (col, &i) in positive.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt().recip();
        transform
            .column_mut(col)
            .copy_from(&(eig.eigenvectors.column(i) * scale));
    }
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok(OsullivanMap {
        transform,
        eigenvalues,
        threshold,
    })
}

/// Result of the spectral reparametrization.
#[derive(Debug, Clone, PartialEq)]
pub struct OsullivanMap {
    /// `n_raw x (n_raw - 2)` map from raw B-spline coefficients to penalized columns.
    pub transform: DMatrix<f64>,
    /// All penalty eigenvalues, descending (the last two are numerically zero).
    pub eigenvalues: Vec<f64>,
    /// Cutoff below which eigenvalues were treated as zero.
    pub threshold: f64,
}

/// Shared spline basis: knots, spectral map, and design-matrix construction.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplineBasis {
    /// Number of penalized columns.
    pub k_prime: usize,
    pub degree: usize,
    pub interior_knots: Vec<f64>,
    /// Full clamped knot vector on [0, 1].
    pub knots: Vec<f64>,
    /// Raw-to-penalized spectral map, `(k_prime + 2) x k_prime`.
    pub transform: DMatrix<f64>,
    /// Penalty eigenvalues retained for diagnostics.
    pub penalty_eigenvalues: Vec<f64>,
}

impl SplineBasis {
    /// Builds the basis for pooled observation times using the size rule.
    pub fn build(pooled_times: &[f64]) -> Result<SplineBasis, SplineError> {
        let mut distinct = pooled_times.to_vec();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        Self::build_with_k(pooled_times, choose_num_basis(distinct.len()))
    }

    /// Builds the basis with an explicit number of penalized columns.
    pub fn build_with_k(pooled_times: &[f64], k_prime: usize) -> Result<SplineBasis, SplineError> {
        let degree = 3;
        let interior = place_knots(pooled_times, k_prime)?;
        let knots = bspline::clamped_knots(&interior, degree);
        debug_assert_eq!(bspline::num_basis(&knots, degree), k_prime + 2);
        let omega = bspline::curvature_penalty(&knots, degree);
        let map = osullivan_transform(&omega)?;
        Ok(SplineBasis {
            k_prime,
            degree,
            interior_knots: interior,
            knots,
            transform: map.transform,
            penalty_eigenvalues: map.eigenvalues,
        })
    }

    /// Total number of design columns: intercept, slope, and `k_prime` penalized.
    pub fn num_cols(&self) -> usize {
        self.k_prime + 2
    }

    /// Raw B-spline design (no intercept/slope, no spectral map). Times
    /// outside [0, 1] are clamped to the boundary.
    pub fn raw_design(&self, times: &[f64]) -> DMatrix<f64> {
        let n_raw = self.k_prime + 2;
        let mut m = DMatrix::zeros(times.len(), n_raw);
        for (r, &t) in times.iter().enumerate() {
            let tc = t.clamp(0.0, 1.0);
            let vals = bspline::basis_all(&self.knots, self.degree, tc);
            for (c, v) in vals.iter().enumerate() {
                m[(r, c)] = *v;
            }
        }
        m
    }

    /// Working design `[1, t, Z(t)]` for a set of times.
    pub fn design(&self, times: &[f64]) -> DMatrix<f64> {
        let z = self.raw_design(times) * &self.transform;
        let mut c = DMatrix::zeros(times.len(), self.num_cols());
        for (r, &t) in times.iter().enumerate() {
            c[(r, 0)] = 1.0;
            c[(r, 1)] = t.clamp(0.0, 1.0);
        }
        c.view_mut((0, 2), (times.len(), self.k_prime)).copy_from(&z);
        c
    }

    /// Second derivative at `t` of the function with penalized coefficients
    /// `u` (the affine columns contribute nothing).
    pub fn penalized_second_derivative(&self, t: f64, u: &DVector<f64>) -> f64 {
        let (_, _, d2) = bspline::basis_with_derivs(&self.knots, self.degree, t.clamp(0.0, 1.0));
        let raw_coef = &self.transform * u;
        d2.iter().zip(raw_coef.iter()).map(|(a, b)| a * b).sum()
    }
}

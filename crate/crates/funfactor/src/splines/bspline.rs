//! B-spline evaluation on a clamped knot vector, with derivatives and the
//! exact curvature penalty matrix.

use nalgebra::{DMatrix, DVector};

/// Number of basis functions of `degree` on `knots`.
pub fn num_basis(knots: &[f64], degree: usize) -> usize {
    knots.len() - degree - 1
}

/// Values of every degree-`degree` B-spline at `t`.
///
/// Uses the Cox–de Boor recursion over the full basis. The evaluation
/// intervals are half-open except at the right boundary, where the last
/// non-empty interval is treated as closed so the basis still sums to one.
pub fn basis_all(knots: &[f64], degree: usize, t: f64) -> Vec<f64> {
    let n0 = knots.len() - 1;
    let t_max = *knots.last().expect("knot vector must be non-empty");
    let mut vals = vec![0.0; n0];
    for i in 0..n0 {
        let in_half_open = knots[i] <= t && t < knots[i + 1];
        let at_end = t == t_max && knots[i] < knots[i + 1] && knots[i + 1] == t_max;
        if in_half_open || at_end {
            vals[i] = 1.0;
        }
    }
    for r in 1..=degree {
        let mut next = vec![0.0; n0 - r];
        for i in 0..n0 - r {
            let mut v = 0.0;
            let den1 = knots[i + r] - knots[i];
            if den1 > 0.0 {
                v += (t - knots[i]) / den1 * vals[i];
            }
            let den2 = knots[i + r + 1] - knots[i + 1];
            if den2 > 0.0 {
                v += (knots[i + r + 1] - t) / den2 * vals[i + 1];
            }
            next[i] = v;
        }
        vals = next;
    }
    vals
}

/// Derivative of the degree-`degree` basis given values of the basis one
/// degree lower (standard knot-difference formula; terms with zero knot
/// spans vanish).
fn derivative_from_lower(knots: &[f64], degree: usize, lower: &[f64]) -> Vec<f64> {
    let n = knots.len() - degree - 1;
    let d = degree as f64;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut v = 0.0;
        let den1 = knots[i + degree] - knots[i];
        if den1 > 0.0 {
            v += lower[i] / den1;
        }
        let den2 = knots[i + degree + 1] - knots[i + 1];
        if den2 > 0.0 {
            v -= lower[i + 1] / den2;
        }
        out[i] = d * v;
    }
    out
}

/// Values, first, and second derivatives of every degree-`degree` B-spline
/// at `t`. Requires `degree >= 2`.
pub fn basis_with_derivs(knots: &[f64], degree: usize, t: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    assert!(degree >= 2, "second derivatives need degree >= 2");
    let b_dm2 = basis_all(knots, degree - 2, t);
    let b_dm1 = basis_all(knots, degree - 1, t);
    let b_d = basis_all(knots, degree, t);
    let d1_dm1 = derivative_from_lower(knots, degree - 1, &b_dm2);
    let d1 = derivative_from_lower(knots, degree, &b_dm1);
    let d2 = derivative_from_lower(knots, degree, &d1_dm1);
    (b_d, d1, d2)
}

/// Exact matrix of integrated products of second derivatives,
/// `Omega[a][b] = integral of B_a'' * B_b''` over the knot range.
///
/// Second derivatives of degree-3 splines are piecewise linear, so their
/// products are piecewise quadratic and Simpson's rule on each knot interval
/// integrates them exactly; this is a closed form, not an approximation.
pub fn curvature_penalty(knots: &[f64], degree: usize) -> DMatrix<f64> {
    assert!(degree == 3, "the exact penalty is specific to cubic splines");
    let n = num_basis(knots, degree);
    let mut omega = DMatrix::zeros(n, n);
    let mut breaks: Vec<f64> = knots.to_vec();
    breaks.dedup();
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        let mid = 0.5 * (a + b);
        for (t, weight) in [(a, h / 6.0), (mid, 4.0 * h / 6.0), (b, h / 6.0)] {
            let (_, _, d2) = basis_with_derivs(knots, degree, t);
            let v = DVector::from_vec(d2);
            omega.syger(weight, &v, &v, 1.0);
        }
    }
    // Symmetrize: syger filled the lower triangle.
    for i in 0..n {
        for j in (i + 1)..n {
            omega[(i, j)] = omega[(j, i)];
        }
    }
    omega
}

/// Clamped knot vector on [0, 1] with the given strictly increasing interior knots.
pub fn clamped_knots(interior: &[f64], degree: usize) -> Vec<f64> {
    let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
    knots.extend(std::iter::repeat(0.0).take(degree + 1));
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat(1.0).take(degree + 1));
    knots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_knots() -> Vec<f64> {
        clamped_knots(&[0.2, 0.35, 0.5, 0.65, 0.8], 3)
    }

    #[test]
    fn partition_of_unity() {
        let knots = test_knots();
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let sum: f64 = basis_all(&knots, 3, t).iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reproduces_linear_functions() {
        // Greville abscissae as coefficients reproduce t exactly.
        let knots = test_knots();
        let n = num_basis(&knots, 3);
        let greville: Vec<f64> = (0..n)
            .map(|i| (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0)
            .collect();
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let vals = basis_all(&knots, 3, t);
            let f: f64 = vals.iter().zip(&greville).map(|(v, g)| v * g).sum();
            assert_relative_eq!(f, t, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let knots = test_knots();
        let h = 1e-6;
        // Stay away from knots so the FD stencil sees a single polynomial piece.
        for &t in &[0.1, 0.27, 0.42, 0.58, 0.72, 0.9] {
            let (_, d1, d2) = basis_with_derivs(&knots, 3, t);
            let up = basis_all(&knots, 3, t + h);
            let dn = basis_all(&knots, 3, t - h);
            let mid = basis_all(&knots, 3, t);
            for i in 0..d1.len() {
                let fd1 = (up[i] - dn[i]) / (2.0 * h);
                let fd2 = (up[i] - 2.0 * mid[i] + dn[i]) / (h * h);
                assert_relative_eq!(d1[i], fd1, epsilon = 1e-5, max_relative = 1e-5);
                assert!((d2[i] - fd2).abs() < 1e-3 * (1.0 + fd2.abs()));
            }
        }
    }

    #[test]
    fn penalty_matches_fine_quadrature_oracle() {
        // Independent oracle: composite Simpson on a uniform 20000-panel grid
        // that ignores knot alignment, applied to the second derivative of a
        // random spline. Frozen coefficients keep the test deterministic.
        let knots = test_knots();
        let n = num_basis(&knots, 3);
        let omega = curvature_penalty(&knots, 3);
        let coef: Vec<f64> = (0..n).map(|i| ((i * 37 + 11) % 17) as f64 / 7.0 - 1.0).collect();
        let d2_of = |t: f64| -> f64 {
            let (_, _, d2) = basis_with_derivs(&knots, 3, t);
            d2.iter().zip(&coef).map(|(v, c)| v * c).sum()
        };
        let panels = 20_000;
        let h = 1.0 / panels as f64;
        let mut quad = 0.0;
        for k in 0..panels {
            let a = k as f64 * h;
            let fa = d2_of(a).powi(2);
            let fm = d2_of(a + 0.5 * h).powi(2);
            let fb = d2_of(a + h).powi(2);
            quad += h / 6.0 * (fa + 4.0 * fm + fb);
        }
        let v = DVector::from_vec(coef);
        let exact = (&v.transpose() * &omega * &v)[(0, 0)];
        assert_relative_eq!(exact, quad, max_relative = 1e-6);
    }

    #[test]
    fn penalty_annihilates_affine_functions() {
        let knots = test_knots();
        let n = num_basis(&knots, 3);
        let omega = curvature_penalty(&knots, 3);
        let ones = DVector::from_element(n, 1.0);
        let greville = DVector::from_iterator(
            n,
            (0..n).map(|i| (knots[i + 1] + knots[i + 2] + knots[i + 3]) / 3.0),
        );
        let scale = omega.norm();
        assert!((&omega * &ones).norm() < 1e-12 * scale);
        assert!((&omega * &greville).norm() < 1e-12 * scale);
    }
}

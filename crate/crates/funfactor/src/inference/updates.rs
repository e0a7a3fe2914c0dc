//! Closed-form heated coordinate updates.
//!
//! Every update maximizes the heated objective over one factor holding the
//! rest fixed, with `c = 1/T`; at `c = 1` each is the standard conditional-
//! conjugate mean-field update. Heating scales Gaussian precisions by `c`
//! (leaving means untouched) and reshapes the inverse-Gamma, Bernoulli, and
//! Beta factors exactly as the tempered exponent dictates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::Hyperparameters;
use crate::error::InferenceError;
use crate::inference::caches::SweepCaches;
use crate::inference::model::ModelData;
use crate::inference::state::{
    BetaBlock, GaussianBlock, IgBlock, SpikeSlabBlock, VariationalState,
};

/// Prior constants resolved against the data dimension.
#[derive(Debug, Clone, Copy)]
pub struct Priors {
    /// Variance of the unpenalized design coefficients.
    pub sigma_beta_sq: f64,
    /// `1 / A^2` for the half-Cauchy(A) scale on every variance.
    pub a_sq_inv: f64,
    /// Beta prior on inclusion probabilities.
    pub c0: f64,
    pub d0: f64,
}

impl Priors {
    pub fn new(hyper: &Hyperparameters, p: usize) -> Priors {
        let (c0, d0) = hyper.omega_prior_for(p);
        Priors {
            sigma_beta_sq: hyper.sigma_beta * hyper.sigma_beta,
            a_sq_inv: hyper.half_cauchy_scale.powi(-2),
            c0,
            d0,
        }
    }
}

/// Cholesky with a single retry: on failure, add `1e-10 * mean(diag)` to the
/// diagonal once; if that also fails, report a numerical error.
pub fn cholesky_with_jitter(
    mat: DMatrix<f64>,
    context: &str,
) -> Result<Cholesky<f64, Dyn>, InferenceError> {
    let jitter = 1e-10 * mat.diagonal().mean();
    match Cholesky::new(mat.clone()) {
        Some(chol) => Ok(chol),
        None => {
            let mut retry = mat;
            for d in 0..retry.nrows() {
                retry[(d, d)] += jitter;
            }
            Cholesky::new(retry).ok_or_else(|| InferenceError::NotPositiveDefinite {
                context: context.to_string(),
                jitter,
            })
        }
    }
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// New mean-coefficient block for variable `j` (exact conditional Gaussian).
pub(crate) fn mean_block(
    noise_j: &IgBlock,
    smooth_j: &IgBlock,
    loadings_row: &[SpikeSlabBlock],
    model: &ModelData,
    caches: &SweepCaches,
    priors: &Priors,
    j: usize,
    c: f64,
) -> Result<GaussianBlock, InferenceError> {
    let k = model.k;
    let w = noise_j.e_inv();
    let mut prec = &model.gram_total * w;
    prec[(0, 0)] += 1.0 / priors.sigma_beta_sq;
    prec[(1, 1)] += 1.0 / priors.sigma_beta_sq;
    let e_smooth = smooth_j.e_inv();
    for d in 2..k {
        prec[(d, d)] += e_smooth;
    }
    let mut rhs = model.proj.column(j).clone_owned();
    for (q, load) in loadings_row.iter().enumerate() {
        rhs.axpy(-load.e_b(), &caches.s[q], 1.0);
    }
    let chol = cholesky_with_jitter(prec, "mean-coefficient precision")?;
    let mean = chol.solve(&(rhs * w));
    let cov = chol.inverse() / c;
    Ok(GaussianBlock { mean, cov })
}

/// Updates the mean-curve coefficients of variable `j` in place.
pub fn update_mean_coeffs(
    state: &mut VariationalState,
    model: &ModelData,
    caches: &SweepCaches,
    priors: &Priors,
    j: usize,
    c: f64,
) -> Result<(), InferenceError> {
    state.mean_coeffs[j] = mean_block(
        &state.noise[j],
        &state.smooth_mean[j],
        &state.loadings[j],
        model,
        caches,
        priors,
        j,
        c,
    )?;
    Ok(())
}

/// New spike-and-slab block for loading `(j, q)`.
pub(crate) fn loading_block(
    loadings_row: &[SpikeSlabBlock],
    mean_j: &GaussianBlock,
    w: f64,
    e_logit_q: f64,
    caches: &SweepCaches,
    j: usize,
    q: usize,
    c: f64,
) -> SpikeSlabBlock {
    let mut t = caches.v[(j, q)] - caches.s[q].dot(&mean_j.mean);
    for (q2, load) in loadings_row.iter().enumerate() {
        if q2 != q {
            t -= load.e_b() * caches.gram_g[(q, q2)];
        }
    }
    let slab_var = 1.0 / (c * (1.0 + w * caches.h[q]));
    let slab_mean = c * slab_var * w * t;
    let logit =
        c * e_logit_q + 0.5 * (slab_var.ln() + slab_mean * slab_mean / slab_var);
    SpikeSlabBlock {
        gamma: sigmoid(logit),
        slab_mean,
        slab_var,
    }
}

/// Updates the loading pair `(b_jq, gamma_jq)` in place.
pub fn update_loading_pair(
    state: &mut VariationalState,
    caches: &SweepCaches,
    j: usize,
    q: usize,
    c: f64,
) {
    state.loadings[j][q] = loading_block(
        &state.loadings[j],
        &state.mean_coeffs[j],
        state.noise[j].e_inv(),
        state.sparsity[q].e_logit(),
        caches,
        j,
        q,
        c,
    );
}

/// Updates the coefficients of eigenfunction `(q, l)` in place and refreshes
/// the factor's cached trajectory coefficients.
///
/// The linear term removes every other contribution at its current
/// variational expectation; for components of the *same* factor that means
/// the exact joint moments `E[b^2] (m_l m_l' + S_ll')`, since the loading
/// enters squared and the score block is jointly Gaussian.
pub fn update_eigen_coeffs(
    state: &mut VariationalState,
    model: &ModelData,
    caches: &mut SweepCaches,
    priors: &Priors,
    q: usize,
    l: usize,
    c: f64,
) -> Result<(), InferenceError> {
    let k = state.k;
    let b2w = caches.b2w[q];
    let mut weighted_gram = DMatrix::zeros(k, k);
    let mut lin = DVector::zeros(k);
    let mut hit = DVector::zeros(k);
    let mut cross = DVector::zeros(k);
    for i in 0..state.n_subjects() {
        let score = &state.scores[i][q];
        let m_l = score.mean[l];
        let e_z_sq = m_l * m_l + score.cov[(l, l)];
        let w = e_z_sq * b2w;
        weighted_gram
            .as_mut_slice()
            .iter_mut()
            .zip(model.gram[i].as_slice())
            .for_each(|(acc, g)| *acc += w * g);

        // Everything the subject design gets applied to, then one gemv.
        hit.copy_from(&caches.rho[q]);
        hit *= m_l;
        for q2 in 0..state.q_max {
            if q2 != q {
                hit.axpy(m_l * caches.bmm[(q, q2)], &caches.g[i][q2], 1.0);
            }
        }
        cross.fill(0.0);
        for l2 in 0..state.l_max {
            if l2 != l {
                cross.axpy(
                    m_l * score.mean[l2] + score.cov[(l, l2)],
                    &state.eigen_coeffs[q][l2].mean,
                    1.0,
                );
            }
        }
        hit.axpy(b2w, &cross, 1.0);
        lin.axpy(m_l, &caches.ytilde[i][q], 1.0);
        lin.gemv(-1.0, &model.gram[i], &hit, 1.0);
    }
    let mut prec = weighted_gram;
    prec[(0, 0)] += 1.0 / priors.sigma_beta_sq;
    prec[(1, 1)] += 1.0 / priors.sigma_beta_sq;
    let e_smooth = state.smooth_eigen[q][l].e_inv();
    for d in 2..k {
        prec[(d, d)] += e_smooth;
    }
    let chol = cholesky_with_jitter(prec, "eigenfunction-coefficient precision")?;
    let mean = chol.solve(&lin);
    let cov = chol.inverse() / c;
    state.eigen_coeffs[q][l] = GaussianBlock { mean, cov };
    caches.refresh_factor_g(state, q);
    Ok(())
}

/// New joint score block for subject `i`, factor `q`, from split cache views
/// so the per-subject stage can run with disjoint mutable borrows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn score_block(
    eigen_q: &[GaussianBlock],
    g_i: &[DVector<f64>],
    eh_iq: &DMatrix<f64>,
    ytilde_iq: &DVector<f64>,
    rho_q: &DVector<f64>,
    bmm: &DMatrix<f64>,
    b2w_q: f64,
    gram_i: &DMatrix<f64>,
    q: usize,
    c: f64,
) -> Result<GaussianBlock, InferenceError> {
    let l_max = eigen_q.len();
    let mut prec = eh_iq * b2w_q;
    for d in 0..l_max {
        prec[(d, d)] += 1.0;
    }
    let mut rhs_k = ytilde_iq.clone();
    let mut hit = rho_q.clone();
    for (q2, g) in g_i.iter().enumerate() {
        if q2 != q {
            hit.axpy(bmm[(q, q2)], g, 1.0);
        }
    }
    rhs_k.gemv(-1.0, gram_i, &hit, 1.0);
    let rhs = DVector::from_iterator(l_max, eigen_q.iter().map(|b| b.mean.dot(&rhs_k)));
    let chol = cholesky_with_jitter(prec, "score precision")?;
    let mean = chol.solve(&rhs);
    let cov = chol.inverse() / c;
    Ok(GaussianBlock { mean, cov })
}

/// Updates the scores of subject `i` on factor `q` in place and refreshes the
/// subject's cached trajectory coefficients.
pub fn update_scores(
    state: &mut VariationalState,
    model: &ModelData,
    caches: &mut SweepCaches,
    i: usize,
    q: usize,
    c: f64,
) -> Result<(), InferenceError> {
    state.scores[i][q] = score_block(
        &state.eigen_coeffs[q],
        &caches.g[i],
        &caches.eh[i][q],
        &caches.ytilde[i][q],
        &caches.rho[q],
        &caches.bmm,
        caches.b2w[q],
        &model.gram[i],
        q,
        c,
    )?;
    caches.refresh_subject_g(state, i, q);
    Ok(())
}

/// Posterior expectation of the squared residual norm for variable `j`,
/// summed over subjects, with every product moment taken exactly under the
/// factorized posterior.
pub fn expected_residual_sq(
    mean_j: &GaussianBlock,
    loadings_row: &[SpikeSlabBlock],
    model: &ModelData,
    caches: &SweepCaches,
    j: usize,
) -> f64 {
    let q_max = loadings_row.len();
    let mut r = model.y_sq[j] - 2.0 * model.proj.column(j).dot(&mean_j.mean);
    r += model.gram_total.dot(&mean_j.cov);
    r += (&model.gram_total * &mean_j.mean).dot(&mean_j.mean);
    for q in 0..q_max {
        let eb = loadings_row[q].e_b();
        r += -2.0 * eb * caches.v[(j, q)];
        r += 2.0 * eb * caches.s[q].dot(&mean_j.mean);
        r += loadings_row[q].e_b_sq() * caches.h[q];
        for q2 in 0..q_max {
            if q2 != q {
                r += eb * loadings_row[q2].e_b() * caches.gram_g[(q, q2)];
            }
        }
    }
    r.max(0.0)
}

/// New noise-variance factor for variable `j` given the current auxiliary.
pub(crate) fn noise_sigma_block(
    mean_j: &GaussianBlock,
    loadings_row: &[SpikeSlabBlock],
    aux_j: &IgBlock,
    model: &ModelData,
    caches: &SweepCaches,
    j: usize,
    c: f64,
) -> IgBlock {
    let r = expected_residual_sq(mean_j, loadings_row, model, caches, j);
    IgBlock {
        shape: c * (0.5 * model.n_total as f64 + 0.5) + c - 1.0,
        rate: c * (aux_j.e_inv() + 0.5 * r),
    }
}

/// New half-Cauchy auxiliary given a variance factor.
pub(crate) fn aux_block(sigma: &IgBlock, priors: &Priors, c: f64) -> IgBlock {
    IgBlock {
        shape: 2.0 * c - 1.0,
        rate: c * (sigma.e_inv() + priors.a_sq_inv),
    }
}

/// Updates only the noise-variance factor of variable `j`.
pub fn update_noise_sigma(
    state: &mut VariationalState,
    model: &ModelData,
    caches: &SweepCaches,
    j: usize,
    c: f64,
) {
    state.noise[j] = noise_sigma_block(
        &state.mean_coeffs[j],
        &state.loadings[j],
        &state.noise_aux[j],
        model,
        caches,
        j,
        c,
    );
}

/// Updates only the noise auxiliary of variable `j`.
pub fn update_noise_aux(state: &mut VariationalState, priors: &Priors, j: usize, c: f64) {
    state.noise_aux[j] = aux_block(&state.noise[j], priors, c);
}

/// Updates the noise variance of variable `j`, then its auxiliary.
pub fn update_noise_variance(
    state: &mut VariationalState,
    model: &ModelData,
    caches: &SweepCaches,
    priors: &Priors,
    j: usize,
    c: f64,
) {
    update_noise_sigma(state, model, caches, j, c);
    update_noise_aux(state, priors, j, c);
}

/// Expected squared norm of a block's penalized coefficients.
fn penalized_sum_sq(block: &GaussianBlock, k_prime: usize) -> f64 {
    let k = block.mean.len();
    block.mean.rows(k - k_prime, k_prime).norm_squared()
        + block
            .cov
            .view((k - k_prime, k - k_prime), (k_prime, k_prime))
            .trace()
}

/// Updates the smoothing variance of variable `j`'s mean curve (auxiliary not touched).
pub fn update_smooth_mean(state: &mut VariationalState, j: usize, c: f64) {
    let ss = penalized_sum_sq(&state.mean_coeffs[j], state.k_prime);
    state.smooth_mean[j] = IgBlock {
        shape: 0.5 * state.k_prime as f64 + 0.5,
        rate: c * (state.smooth_mean_aux[j].e_inv() + 0.5 * ss),
    };
}

/// Updates the smoothing variance of eigenfunction `(q, l)` (auxiliary not touched).
pub fn update_smooth_eigen(state: &mut VariationalState, q: usize, l: usize, c: f64) {
    let ss = penalized_sum_sq(&state.eigen_coeffs[q][l], state.k_prime);
    state.smooth_eigen[q][l] = IgBlock {
        shape: 0.5 * state.k_prime as f64 + 0.5,
        rate: c * (state.smooth_eigen_aux[q][l].e_inv() + 0.5 * ss),
    };
}

/// Updates only the auxiliary of variable `j`'s mean-curve smoothing variance.
pub fn update_smooth_mean_aux(state: &mut VariationalState, priors: &Priors, j: usize, c: f64) {
    state.smooth_mean_aux[j] = aux_block(&state.smooth_mean[j], priors, c);
}

/// Updates only the auxiliary of eigenfunction `(q, l)`'s smoothing variance.
pub fn update_smooth_eigen_aux(
    state: &mut VariationalState,
    priors: &Priors,
    q: usize,
    l: usize,
    c: f64,
) {
    state.smooth_eigen_aux[q][l] = aux_block(&state.smooth_eigen[q][l], priors, c);
}

/// Updates every smoothing variance and auxiliary, mean curves first.
pub fn update_smoothing_variances(state: &mut VariationalState, priors: &Priors, c: f64) {
    for j in 0..state.p() {
        update_smooth_mean(state, j, c);
        update_smooth_mean_aux(state, priors, j, c);
    }
    for q in 0..state.q_max {
        for l in 0..state.l_max {
            update_smooth_eigen(state, q, l, c);
            update_smooth_eigen_aux(state, priors, q, l, c);
        }
    }
}

/// Updates the Beta factor on factor `q`'s inclusion probability.
pub fn update_sparsity_weight(state: &mut VariationalState, priors: &Priors, q: usize, c: f64) {
    let sum_gamma: f64 = state.loadings.iter().map(|row| row[q].gamma).sum();
    let p = state.p() as f64;
    state.sparsity[q] = BetaBlock {
        a: c * (priors.c0 + sum_gamma) - c + 1.0,
        b: c * (priors.d0 + p - sum_gamma) - c + 1.0,
    };
}

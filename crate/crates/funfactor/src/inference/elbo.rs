//! Evidence lower bound, decomposed by factor group.
//!
//! Each variational factor contributes a cross term `E_q[ln p(...)]` and its
//! own entropy. The heated objective multiplies the total entropy by the
//! temperature; at `T = 1` the two coincide with the ordinary bound.

use nalgebra::DVector;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::data::LongitudinalDataset;
use crate::error::InferenceError;
use crate::inference::caches::SweepCaches;
use crate::inference::model::ModelData;
use crate::inference::state::{BetaBlock, GaussianBlock, IgBlock, SpikeSlabBlock, VariationalState};
use crate::inference::updates::{cholesky_with_jitter, expected_residual_sq, Priors};

const LN_2PI: f64 = 1.837877066409345483560659472811;

/// Cross-entropy/entropy pair for one factor group.
#[derive(Debug, Clone, Copy, Default)]
pub struct Term {
    pub cross: f64,
    pub entropy: f64,
}

impl Term {
    fn add(&mut self, other: Term) {
        self.cross += other.cross;
        self.entropy += other.entropy;
    }
}

/// The bound split by factor group, so tests can pin down individual pieces.
#[derive(Debug, Clone, Copy, Default)]
pub struct ElboBreakdown {
    /// `E_q[ln p(Y | ...)]` — has no entropy companion.
    pub likelihood: f64,
    pub mean_coeffs: Term,
    pub eigen_coeffs: Term,
    pub scores: Term,
    pub loadings: Term,
    pub sparsity: Term,
    pub noise: Term,
    pub noise_aux: Term,
    pub smooth_mean: Term,
    pub smooth_mean_aux: Term,
    pub smooth_eigen: Term,
    pub smooth_eigen_aux: Term,
}

impl ElboBreakdown {
    fn groups(&self) -> [Term; 11] {
        [
            self.mean_coeffs,
            self.eigen_coeffs,
            self.scores,
            self.loadings,
            self.sparsity,
            self.noise,
            self.noise_aux,
            self.smooth_mean,
            self.smooth_mean_aux,
            self.smooth_eigen,
            self.smooth_eigen_aux,
        ]
    }

    pub fn cross_total(&self) -> f64 {
        self.likelihood + self.groups().iter().map(|t| t.cross).sum::<f64>()
    }

    pub fn entropy_total(&self) -> f64 {
        self.groups().iter().map(|t| t.entropy).sum::<f64>()
    }

    /// Heated bound at the given temperature.
    pub fn heated(&self, temperature: f64) -> f64 {
        self.cross_total() + temperature * self.entropy_total()
    }

    /// Ordinary evidence lower bound.
    pub fn unheated(&self) -> f64 {
        self.cross_total() + self.entropy_total()
    }
}

/// Term for a Gaussian factor under an independent zero-mean Gaussian prior
/// with the given diagonal precisions and expected log-determinant.
fn gaussian_term(
    block: &GaussianBlock,
    prior_prec: &DVector<f64>,
    e_logdet_prior: f64,
) -> Result<Term, InferenceError> {
    let k = block.mean.len();
    let mut quad = 0.0;
    for d in 0..k {
        quad += prior_prec[d] * (block.cov[(d, d)] + block.mean[d] * block.mean[d]);
    }
    let chol = cholesky_with_jitter(block.cov.clone(), "posterior covariance in bound")?;
    let ln_det = 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
    Ok(Term {
        cross: -0.5 * (k as f64 * LN_2PI + e_logdet_prior + quad),
        entropy: 0.5 * ln_det + 0.5 * k as f64 * (1.0 + LN_2PI),
    })
}

/// Term for an inverse-Gamma factor whose prior is inverse-Gamma with fixed
/// shape and a (possibly random) rate known through its expectations.
fn inverse_gamma_term(
    block: &IgBlock,
    prior_shape: f64,
    e_log_prior_rate: f64,
    e_prior_rate: f64,
) -> Term {
    Term {
        cross: prior_shape * e_log_prior_rate - ln_gamma(prior_shape)
            - (prior_shape + 1.0) * block.e_log()
            - e_prior_rate * block.e_inv(),
        entropy: block.shape + block.rate.ln() + ln_gamma(block.shape)
            - (1.0 + block.shape) * digamma(block.shape),
    }
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Term for one spike-and-slab loading given the factor's Beta moments.
fn loading_term(block: &SpikeSlabBlock, e_log_w: f64, e_log_1mw: f64) -> Term {
    let g = block.gamma;
    let cross = g * (-0.5 * LN_2PI
        - 0.5 * (block.slab_mean * block.slab_mean + block.slab_var))
        + g * e_log_w
        + (1.0 - g) * e_log_1mw;
    let entropy =
        g * 0.5 * ((LN_2PI + block.slab_var.ln()) + 1.0) - xlnx(g) - xlnx(1.0 - g);
    Term { cross, entropy }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Term for a Beta factor under a Beta(c0, d0) prior.
fn sparsity_term(block: &BetaBlock, c0: f64, d0: f64) -> Term {
    let (a, b) = (block.a, block.b);
    Term {
        cross: -ln_beta(c0, d0)
            + (c0 - 1.0) * block.e_log()
            + (d0 - 1.0) * block.e_log_complement(),
        entropy: ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
            + (a + b - 2.0) * digamma(a + b),
    }
}

/// Computes the full decomposition, rebuilding all caches from the state so
/// the result is a pure function of `(state, data)`.
pub fn compute_elbo_parts(
    state: &VariationalState,
    data: &LongitudinalDataset,
    model: &ModelData,
    priors: &Priors,
) -> Result<ElboBreakdown, InferenceError> {
    let caches = SweepCaches::compute_base(state, data, model);
    compute_elbo_parts_with_caches(state, model, priors, &caches)
}

/// Same as [`compute_elbo_parts`] but reuses caches whose residual statistics
/// are already current (`g`, `eh`, `s`, `gram_g`, `h`, `v`).
pub fn compute_elbo_parts_with_caches(
    state: &VariationalState,
    model: &ModelData,
    priors: &Priors,
    caches: &SweepCaches,
) -> Result<ElboBreakdown, InferenceError> {
    let p = state.p();
    let k = state.k;
    let k_prime = state.k_prime;
    let mut parts = ElboBreakdown::default();

    let unpenalized_prec = 1.0 / priors.sigma_beta_sq;
    let ln_sigma_beta_sq = priors.sigma_beta_sq.ln();
    let ln_a_sq_inv = priors.a_sq_inv.ln();
    let mut prior_prec = DVector::zeros(k);
    prior_prec[0] = unpenalized_prec;
    prior_prec[1] = unpenalized_prec;

    // Mean curves, their smoothing variances, and those variances' auxiliaries.
    for j in 0..p {
        let smooth = &state.smooth_mean[j];
        for d in 2..k {
            prior_prec[d] = smooth.e_inv();
        }
        let e_logdet = 2.0 * ln_sigma_beta_sq + k_prime as f64 * smooth.e_log();
        parts
            .mean_coeffs
            .add(gaussian_term(&state.mean_coeffs[j], &prior_prec, e_logdet)?);
        let aux = &state.smooth_mean_aux[j];
        parts
            .smooth_mean
            .add(inverse_gamma_term(smooth, 0.5, -aux.e_log(), aux.e_inv()));
        parts
            .smooth_mean_aux
            .add(inverse_gamma_term(aux, 0.5, ln_a_sq_inv, priors.a_sq_inv));
    }

    // Eigenfunction coefficients and their smoothing hierarchy.
    for q in 0..state.q_max {
        for l in 0..state.l_max {
            let smooth = &state.smooth_eigen[q][l];
            for d in 2..k {
                prior_prec[d] = smooth.e_inv();
            }
            let e_logdet = 2.0 * ln_sigma_beta_sq + k_prime as f64 * smooth.e_log();
            parts.eigen_coeffs.add(gaussian_term(
                &state.eigen_coeffs[q][l],
                &prior_prec,
                e_logdet,
            )?);
            let aux = &state.smooth_eigen_aux[q][l];
            parts
                .smooth_eigen
                .add(inverse_gamma_term(smooth, 0.5, -aux.e_log(), aux.e_inv()));
            parts
                .smooth_eigen_aux
                .add(inverse_gamma_term(aux, 0.5, ln_a_sq_inv, priors.a_sq_inv));
        }
    }

    // Scores: standard-normal prior on every component.
    let score_prec = DVector::from_element(state.l_max, 1.0);
    for i in 0..state.n_subjects() {
        for q in 0..state.q_max {
            parts
                .scores
                .add(gaussian_term(&state.scores[i][q], &score_prec, 0.0)?);
        }
    }

    // Loadings and the factor-level inclusion probabilities.
    for q in 0..state.q_max {
        let sparsity = &state.sparsity[q];
        let (e_log_w, e_log_1mw) = (sparsity.e_log(), sparsity.e_log_complement());
        for j in 0..p {
            parts
                .loadings
                .add(loading_term(&state.loadings[j][q], e_log_w, e_log_1mw));
        }
        parts
            .sparsity
            .add(sparsity_term(sparsity, priors.c0, priors.d0));
    }

    // Noise variances, their auxiliaries, and the data term.
    let n_total = model.n_total as f64;
    for j in 0..p {
        let noise = &state.noise[j];
        let aux = &state.noise_aux[j];
        parts
            .noise
            .add(inverse_gamma_term(noise, 0.5, -aux.e_log(), aux.e_inv()));
        parts
            .noise_aux
            .add(inverse_gamma_term(aux, 0.5, ln_a_sq_inv, priors.a_sq_inv));
        let r = expected_residual_sq(&state.mean_coeffs[j], &state.loadings[j], model, caches, j);
        parts.likelihood += -0.5 * (n_total * (LN_2PI + noise.e_log()) + noise.e_inv() * r);
    }

    Ok(parts)
}

/// Ordinary (unheated) bound as a single number.
pub fn compute_elbo(
    state: &VariationalState,
    data: &LongitudinalDataset,
    model: &ModelData,
    priors: &Priors,
) -> Result<f64, InferenceError> {
    Ok(compute_elbo_parts(state, data, model, priors)?.unheated())
}

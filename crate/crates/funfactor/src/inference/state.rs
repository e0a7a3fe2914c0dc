//! Variational factor blocks and deterministic initialization.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::digamma;

use serde::{Deserialize, Serialize};

use crate::data::{Hyperparameters, LongitudinalDataset};
use crate::error::InferenceError;
use crate::inference::model::ModelData;
use crate::rng;

/// Multivariate Gaussian factor `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBlock {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Inverse-Gamma factor with the usual shape/rate parametrization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgBlock {
    pub shape: f64,
    pub rate: f64,
}

impl IgBlock {
    /// E[1/x] = shape / rate.
    pub fn e_inv(&self) -> f64 {
        self.shape / self.rate
    }

    /// E[log x] = log(rate) - digamma(shape).
    pub fn e_log(&self) -> f64 {
        self.rate.ln() - digamma(self.shape)
    }

    /// E[x] = rate / (shape - 1); only defined for shape > 1.
    pub fn e_x(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }
}

/// Spike-and-slab factor for one loading: point mass at zero with
/// probability `1 - gamma`, otherwise `N(slab_mean, slab_var)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeSlabBlock {
    pub gamma: f64,
    pub slab_mean: f64,
    pub slab_var: f64,
}

impl SpikeSlabBlock {
    pub fn e_b(&self) -> f64 {
        self.gamma * self.slab_mean
    }

    pub fn e_b_sq(&self) -> f64 {
        self.gamma * (self.slab_mean * self.slab_mean + self.slab_var)
    }
}

/// Beta factor on a factor's inclusion probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBlock {
    pub a: f64,
    pub b: f64,
}

impl BetaBlock {
    pub fn e_log(&self) -> f64 {
        digamma(self.a) - digamma(self.a + self.b)
    }

    pub fn e_log_complement(&self) -> f64 {
        digamma(self.b) - digamma(self.a + self.b)
    }

    /// E[log w - log(1 - w)] = digamma(a) - digamma(b).
    pub fn e_logit(&self) -> f64 {
        digamma(self.a) - digamma(self.b)
    }
}

/// All variational factors of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// Design columns (2 unpenalized + k_prime penalized).
    pub k: usize,
    pub k_prime: usize,
    pub q_max: usize,
    pub l_max: usize,
    /// Per-variable mean-curve coefficients, `p` blocks of dimension `k`.
    pub mean_coeffs: Vec<GaussianBlock>,
    /// Eigenfunction coefficients, `[q][l]` blocks of dimension `k`.
    pub eigen_coeffs: Vec<Vec<GaussianBlock>>,
    /// Subject scores, `[i][q]` blocks of dimension `l_max` (jointly Gaussian over components).
    pub scores: Vec<Vec<GaussianBlock>>,
    /// Observation noise variances per variable, plus half-Cauchy auxiliaries.
    pub noise: Vec<IgBlock>,
    pub noise_aux: Vec<IgBlock>,
    /// Smoothing variances of the mean curves, per variable.
    pub smooth_mean: Vec<IgBlock>,
    pub smooth_mean_aux: Vec<IgBlock>,
    /// Smoothing variances of the eigenfunctions, `[q][l]`.
    pub smooth_eigen: Vec<Vec<IgBlock>>,
    pub smooth_eigen_aux: Vec<Vec<IgBlock>>,
    /// Spike-and-slab loadings, `[j][q]`.
    pub loadings: Vec<Vec<SpikeSlabBlock>>,
    /// Beta factors on each factor's inclusion probability.
    pub sparsity: Vec<BetaBlock>,
}

impl VariationalState {
    pub fn p(&self) -> usize {
        self.mean_coeffs.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.scores.len()
    }

    /// Posterior-mean eigenfunction coefficients of factor `q` as a `k x l_max` matrix.
    pub fn eigen_mean_matrix(&self, q: usize) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.k, self.l_max);
        for (l, block) in self.eigen_coeffs[q].iter().enumerate() {
            v.column_mut(l).copy_from(&block.mean);
        }
        v
    }

    /// Coefficients of subject `i`'s posterior-mean trajectory for factor `q`
    /// (eigenfunction means weighted by score means).
    pub fn factor_coef(&self, i: usize, q: usize) -> DVector<f64> {
        let m = &self.scores[i][q].mean;
        let mut g = DVector::zeros(self.k);
        for (l, block) in self.eigen_coeffs[q].iter().enumerate() {
            g.axpy(m[l], &block.mean, 1.0);
        }
        g
    }
}

/// Deterministic starting point for the coordinate ascent.
///
/// Mean-curve blocks start at their exact coordinate update given zero
/// loadings, with noise precisions taken from per-variable ridge residuals;
/// eigenfunction coefficient means are small-scale Gaussian draws (so factors
/// are not born identical), scores start standard normal, loadings start
/// half-on with zero slab mean, and all inverse-Gamma factors start at
/// moment-matched neutral values.
pub fn init_state(
    data: &LongitudinalDataset,
    model: &ModelData,
    hyper: &Hyperparameters,
) -> Result<VariationalState, InferenceError> {
    let p = data.p;
    let n = data.n_subjects();
    let k = model.k;
    let k_prime = model.basis.k_prime;
    let (q_max, l_max) = (hyper.q_max, hyper.l_max);
    let n_total = model.n_total as f64;
    let sigma_beta_sq = hyper.sigma_beta * hyper.sigma_beta;
    let a_sq_inv = hyper.half_cauchy_scale.powi(-2);

    // Per-variable ridge fit on the shared design for residual variances.
    let ridge = 1e-6 * model.gram_total.trace() / k as f64;
    let mut ridge_mat = model.gram_total.clone();
    for d in 0..k {
        ridge_mat[(d, d)] += ridge;
    }
    let ridge_chol = super::updates::cholesky_with_jitter(ridge_mat, "ridge initialization")?;
    let mut resid_var = Vec::with_capacity(p);
    for j in 0..p {
        let proj_j = model.proj.column(j).clone_owned();
        let mu_hat = ridge_chol.solve(&proj_j);
        let sse = model.y_sq[j] - 2.0 * mu_hat.dot(&proj_j)
            + (&model.gram_total * &mu_hat).dot(&mu_hat);
        resid_var.push((sse / n_total).max(1e-10));
    }

    let noise: Vec<IgBlock> = resid_var
        .iter()
        .map(|&s2| {
            let shape = 0.5 * n_total + 0.5;
            IgBlock {
                shape,
                rate: shape * s2,
            }
        })
        .collect();
    let noise_aux: Vec<IgBlock> = resid_var
        .iter()
        .map(|&s2| IgBlock {
            shape: 1.0,
            rate: a_sq_inv + 1.0 / s2,
        })
        .collect();

    let neutral_smooth = IgBlock {
        shape: 0.5 * k_prime as f64 + 0.5,
        rate: 0.5 * k_prime as f64 + 0.5,
    };
    let neutral_aux = IgBlock {
        shape: 1.0,
        rate: a_sq_inv + 1.0,
    };

    // Exact mean-coefficient update at c = 1 with all loadings at zero: a
    // ridge fit whose penalty is the prior precision. Zero data gives a zero
    // mean curve.
    let mut mean_coeffs = Vec::with_capacity(p);
    for j in 0..p {
        let w = noise[j].e_inv();
        let mut prec = &model.gram_total * w;
        prec[(0, 0)] += 1.0 / sigma_beta_sq;
        prec[(1, 1)] += 1.0 / sigma_beta_sq;
        for d in 2..k {
            prec[(d, d)] += neutral_smooth.e_inv();
        }
        let chol = super::updates::cholesky_with_jitter(prec, "mean initialization")?;
        let mean = chol.solve(&(model.proj.column(j) * w));
        mean_coeffs.push(GaussianBlock {
            mean,
            cov: chol.inverse(),
        });
    }

    let mut rng = rng::stream(hyper.seed, 0);
    let mut eigen_coeffs = Vec::with_capacity(q_max);
    for _ in 0..q_max {
        let mut per_factor = Vec::with_capacity(l_max);
        for _ in 0..l_max {
            let mean = DVector::from_iterator(
                k,
                (0..k).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)),
            );
            per_factor.push(GaussianBlock {
                mean,
                cov: DMatrix::identity(k, k) * 0.1,
            });
        }
        eigen_coeffs.push(per_factor);
    }

    let mut scores = Vec::with_capacity(n);
    for _ in 0..n {
        let mut per_subject = Vec::with_capacity(q_max);
        for _ in 0..q_max {
            let mean = DVector::from_iterator(
                l_max,
                (0..l_max).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            per_subject.push(GaussianBlock {
                mean,
                cov: DMatrix::identity(l_max, l_max),
            });
        }
        scores.push(per_subject);
    }

    // Noncommittal inclusion with a random slab mean at the prior scale.
    // E[b] must start nonzero: every data channel into the trajectory
    // updates is weighted by E[b], so a zero start would leave the factors
    // blind to the data and the spike prior would absorb them unopposed.
    // A random draw acts as a projection seed that the first sweeps align.
    let loadings: Vec<Vec<SpikeSlabBlock>> = (0..p)
        .map(|_| {
            (0..q_max)
                .map(|_| SpikeSlabBlock {
                    gamma: 0.5,
                    slab_mean: rng.sample::<f64, _>(StandardNormal),
                    slab_var: 1.0,
                })
                .collect()
        })
        .collect();
    let (c0, d0) = hyper.omega_prior_for(p);
    let sparsity = vec![BetaBlock { a: c0, b: d0 }; q_max];

    Ok(VariationalState {
        k,
        k_prime,
        q_max,
        l_max,
        mean_coeffs,
        eigen_coeffs,
        scores,
        noise,
        noise_aux,
        smooth_mean: vec![neutral_smooth; p],
        smooth_mean_aux: vec![neutral_aux; p],
        smooth_eigen: vec![vec![neutral_smooth; l_max]; q_max],
        smooth_eigen_aux: vec![vec![neutral_aux; l_max]; q_max],
        loadings,
        sparsity,
    })
}

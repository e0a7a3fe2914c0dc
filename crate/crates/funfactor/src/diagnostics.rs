//! Numerical self-checks for the optimizer.
//!
//! Every coordinate update is a closed-form argmax of the (heated) bound over
//! one factor. This module makes that property checkable by brute force:
//! enumerate factors, apply a single update, and measure the central-
//! finite-difference gradient of the bound with respect to that factor's
//! free parameters. A correct update leaves the gradient at numerical zero.
//! The test suite leans on these checks heavily; they are also handy when
//! validating a port or a refactor of the update formulas.

use nalgebra::DMatrix;

use crate::data::LongitudinalDataset;
use crate::error::InferenceError;
use crate::inference::caches::SweepCaches;
use crate::inference::elbo::compute_elbo_parts;
use crate::inference::model::ModelData;
use crate::inference::state::{GaussianBlock, VariationalState};
use crate::inference::updates::{
    cholesky_with_jitter, update_eigen_coeffs, update_loading_pair, update_mean_coeffs,
    update_noise_aux, update_noise_sigma, update_scores, update_smooth_eigen,
    update_smooth_eigen_aux, update_smooth_mean, update_smooth_mean_aux,
    update_sparsity_weight, Priors,
};

/// Address of one factor in the mean-field posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorBlock {
    MeanCoeffs { j: usize },
    EigenCoeffs { q: usize, l: usize },
    Scores { i: usize, q: usize },
    Loading { j: usize, q: usize },
    NoiseVariance { j: usize },
    NoiseAux { j: usize },
    SmoothMean { j: usize },
    SmoothMeanAux { j: usize },
    SmoothEigen { q: usize, l: usize },
    SmoothEigenAux { q: usize, l: usize },
    Sparsity { q: usize },
}

/// Every factor block present in a state, in sweep order.
pub fn enumerate_blocks(state: &VariationalState) -> Vec<FactorBlock> {
    let mut blocks = Vec::new();
    for j in 0..state.p() {
        blocks.push(FactorBlock::MeanCoeffs { j });
    }
    for j in 0..state.p() {
        for q in 0..state.q_max {
            blocks.push(FactorBlock::Loading { j, q });
        }
    }
    for q in 0..state.q_max {
        for l in 0..state.l_max {
            blocks.push(FactorBlock::EigenCoeffs { q, l });
        }
    }
    for i in 0..state.n_subjects() {
        for q in 0..state.q_max {
            blocks.push(FactorBlock::Scores { i, q });
        }
    }
    for j in 0..state.p() {
        blocks.push(FactorBlock::NoiseVariance { j });
        blocks.push(FactorBlock::NoiseAux { j });
        blocks.push(FactorBlock::SmoothMean { j });
        blocks.push(FactorBlock::SmoothMeanAux { j });
    }
    for q in 0..state.q_max {
        for l in 0..state.l_max {
            blocks.push(FactorBlock::SmoothEigen { q, l });
            blocks.push(FactorBlock::SmoothEigenAux { q, l });
        }
    }
    for q in 0..state.q_max {
        blocks.push(FactorBlock::Sparsity { q });
    }
    blocks
}

/// Applies exactly one coordinate update (with freshly built caches) at
/// inverse temperature `c`.
pub fn apply_single_update(
    state: &mut VariationalState,
    data: &LongitudinalDataset,
    model: &ModelData,
    priors: &Priors,
    block: FactorBlock,
    c: f64,
) -> Result<(), InferenceError> {
    let mut caches = SweepCaches::compute(state, data, model);
    match block {
        FactorBlock::MeanCoeffs { j } => update_mean_coeffs(state, model, &caches, priors, j, c)?,
        FactorBlock::Loading { j, q } => update_loading_pair(state, &caches, j, q, c),
        FactorBlock::EigenCoeffs { q, l } => {
            update_eigen_coeffs(state, model, &mut caches, priors, q, l, c)?
        }
        FactorBlock::Scores { i, q } => update_scores(state, model, &mut caches, i, q, c)?,
        FactorBlock::NoiseVariance { j } => update_noise_sigma(state, model, &caches, j, c),
        FactorBlock::NoiseAux { j } => update_noise_aux(state, priors, j, c),
        FactorBlock::SmoothMean { j } => update_smooth_mean(state, j, c),
        FactorBlock::SmoothMeanAux { j } => update_smooth_mean_aux(state, priors, j, c),
        FactorBlock::SmoothEigen { q, l } => update_smooth_eigen(state, q, l, c),
        FactorBlock::SmoothEigenAux { q, l } => update_smooth_eigen_aux(state, priors, q, l, c),
        FactorBlock::Sparsity { q } => update_sparsity_weight(state, priors, q, c),
    }
    Ok(())
}

/// How one scalar parameter is perturbed for finite differences.
#[derive(Debug, Clone, Copy)]
enum ParamKind {
    /// Unconstrained; absolute step scaled by magnitude.
    Free,
    /// Positive; multiplicative step (derivative taken in log space).
    LogScale,
    /// Probability in (0, 1); perturbed through its log-odds.
    Logit,
}

struct BlockParams {
    values: Vec<f64>,
    kinds: Vec<ParamKind>,
}

/// Flattens a Gaussian block as (mean, lower Cholesky of the covariance).
fn gaussian_params(block: &GaussianBlock) -> Result<BlockParams, InferenceError> {
    let k = block.mean.len();
    let chol = cholesky_with_jitter(block.cov.clone(), "diagnostic parameterization")?;
    let l = chol.l();
    let mut values: Vec<f64> = block.mean.iter().copied().collect();
    let mut kinds = vec![ParamKind::Free; k];
    for col in 0..k {
        for row in col..k {
            values.push(l[(row, col)]);
            kinds.push(if row == col {
                ParamKind::LogScale
            } else {
                ParamKind::Free
            });
        }
    }
    Ok(BlockParams { values, kinds })
}

fn set_gaussian_params(block: &mut GaussianBlock, values: &[f64]) {
    let k = block.mean.len();
    for d in 0..k {
        block.mean[d] = values[d];
    }
    let mut l = DMatrix::zeros(k, k);
    let mut idx = k;
    for col in 0..k {
        for row in col..k {
            l[(row, col)] = values[idx];
            idx += 1;
        }
    }
    block.cov = &l * l.transpose();
}

fn get_params(state: &VariationalState, block: FactorBlock) -> Result<BlockParams, InferenceError> {
    Ok(match block {
        FactorBlock::MeanCoeffs { j } => gaussian_params(&state.mean_coeffs[j])?,
        FactorBlock::EigenCoeffs { q, l } => gaussian_params(&state.eigen_coeffs[q][l])?,
        FactorBlock::Scores { i, q } => gaussian_params(&state.scores[i][q])?,
        FactorBlock::Loading { j, q } => {
            let b = &state.loadings[j][q];
            BlockParams {
                values: vec![b.gamma, b.slab_mean, b.slab_var],
                kinds: vec![ParamKind::Logit, ParamKind::Free, ParamKind::LogScale],
            }
        }
        FactorBlock::NoiseVariance { j } => ig_params(state.noise[j].shape, state.noise[j].rate),
        FactorBlock::NoiseAux { j } => {
            ig_params(state.noise_aux[j].shape, state.noise_aux[j].rate)
        }
        FactorBlock::SmoothMean { j } => {
            ig_params(state.smooth_mean[j].shape, state.smooth_mean[j].rate)
        }
        FactorBlock::SmoothMeanAux { j } => {
            ig_params(state.smooth_mean_aux[j].shape, state.smooth_mean_aux[j].rate)
        }
        FactorBlock::SmoothEigen { q, l } => {
            ig_params(state.smooth_eigen[q][l].shape, state.smooth_eigen[q][l].rate)
        }
        FactorBlock::SmoothEigenAux { q, l } => ig_params(
            state.smooth_eigen_aux[q][l].shape,
            state.smooth_eigen_aux[q][l].rate,
        ),
        FactorBlock::Sparsity { q } => ig_params(state.sparsity[q].a, state.sparsity[q].b),
    })
}

fn ig_params(a: f64, b: f64) -> BlockParams {
    BlockParams {
        values: vec![a, b],
        kinds: vec![ParamKind::LogScale, ParamKind::LogScale],
    }
}

fn set_params(state: &mut VariationalState, block: FactorBlock, values: &[f64]) {
    match block {
        FactorBlock::MeanCoeffs { j } => set_gaussian_params(&mut state.mean_coeffs[j], values),
        FactorBlock::EigenCoeffs { q, l } => {
            set_gaussian_params(&mut state.eigen_coeffs[q][l], values)
        }
        FactorBlock::Scores { i, q } => set_gaussian_params(&mut state.scores[i][q], values),
        FactorBlock::Loading { j, q } => {
            let b = &mut state.loadings[j][q];
            b.gamma = values[0];
            b.slab_mean = values[1];
            b.slab_var = values[2];
        }
        FactorBlock::NoiseVariance { j } => {
            state.noise[j].shape = values[0];
            state.noise[j].rate = values[1];
        }
        FactorBlock::NoiseAux { j } => {
            state.noise_aux[j].shape = values[0];
            state.noise_aux[j].rate = values[1];
        }
        FactorBlock::SmoothMean { j } => {
            state.smooth_mean[j].shape = values[0];
            state.smooth_mean[j].rate = values[1];
        }
        FactorBlock::SmoothMeanAux { j } => {
            state.smooth_mean_aux[j].shape = values[0];
            state.smooth_mean_aux[j].rate = values[1];
        }
        FactorBlock::SmoothEigen { q, l } => {
            state.smooth_eigen[q][l].shape = values[0];
            state.smooth_eigen[q][l].rate = values[1];
        }
        FactorBlock::SmoothEigenAux { q, l } => {
            state.smooth_eigen_aux[q][l].shape = values[0];
            state.smooth_eigen_aux[q][l].rate = values[1];
        }
        FactorBlock::Sparsity { q } => {
            state.sparsity[q].a = values[0];
            state.sparsity[q].b = values[1];
        }
    }
}

/// Max-norm central-finite-difference gradient of the heated bound with
/// respect to one block's free parameters, evaluated at the current state.
///
/// Positive parameters are differentiated in log space and probabilities in
/// log-odds space, so every probe stays in the valid domain; a probability
/// saturated to an exact floating-point 0 or 1 is skipped (its log-odds
/// derivative vanishes in the limit).
pub fn stationarity_gap(
    state: &VariationalState,
    data: &LongitudinalDataset,
    model: &ModelData,
    priors: &Priors,
    block: FactorBlock,
    temperature: f64,
) -> Result<f64, InferenceError> {
    let params = get_params(state, block)?;
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for idx in 0..params.values.len() {
        let value = params.values[idx];
        let (plus, minus, denom) = match params.kinds[idx] {
            ParamKind::Free => {
                let step = h * value.abs().max(1.0);
                (value + step, value - step, 2.0 * step)
            }
            ParamKind::LogScale => {
                let factor = h.exp();
                (value * factor, value / factor, 2.0 * h)
            }
            ParamKind::Logit => {
                if value <= 0.0 || value >= 1.0 {
                    continue;
                }
                let logit = (value / (1.0 - value)).ln();
                if !logit.is_finite() {
                    continue;
                }
                let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
                (sig(logit + h), sig(logit - h), 2.0 * h)
            }
        };
        let probe = |v: f64| -> Result<f64, InferenceError> {
            let mut values = params.values.clone();
            values[idx] = v;
            let mut perturbed = state.clone();
            set_params(&mut perturbed, block, &values);
            Ok(compute_elbo_parts(&perturbed, data, model, priors)?.heated(temperature))
        };
        let grad = (probe(plus)? - probe(minus)?) / denom;
        worst = worst.max(grad.abs());
    }
    Ok(worst)
}

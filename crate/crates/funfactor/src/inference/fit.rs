//! Annealed coordinate-ascent driver.
//!
//! One sweep updates every factor once in a fixed order chosen so each
//! closed-form update sees current values of everything it conditions on:
//! mean curves, loadings, eigenfunction coefficients, scores, noise
//! variances, smoothing variances, inclusion probabilities. Stages whose
//! coordinates are conditionally independent (across variables or subjects)
//! run as parallel maps with ordered collection, so results are bitwise
//! identical for any thread count.

use std::time::Instant;

use rayon::prelude::*;

use crate::data::{Hyperparameters, LongitudinalDataset};
use crate::error::InferenceError;
use crate::inference::caches::SweepCaches;
use crate::inference::elbo::{compute_elbo_parts_with_caches, ElboBreakdown};
use crate::inference::model::ModelData;
use crate::inference::schedule::make_schedule;
use crate::inference::state::{init_state, GaussianBlock, SpikeSlabBlock, VariationalState};
use crate::inference::updates::{
    aux_block, loading_block, mean_block, noise_sigma_block, update_eigen_coeffs,
    update_smoothing_variances, update_sparsity_weight, Priors,
};
use crate::splines::SplineBasis;

/// How the final constant-temperature loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    /// Relative change of the bound dropped below the tolerance.
    Converged,
    /// The iteration cap was reached first.
    MaxIterExceeded,
}

/// One row of the optimization trace.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ElboRecord {
    /// 1-based sweep counter across all temperature levels.
    pub sweep: usize,
    /// Temperature the sweep ran at.
    pub temperature: f64,
    /// Heated objective at that temperature.
    pub heated: f64,
    /// Ordinary bound (temperature 1) for the same state.
    pub unheated: f64,
    /// Wall-clock seconds since the fit started.
    pub seconds: f64,
}

/// Sweep-by-sweep objective values.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ElboTrace {
    pub records: Vec<ElboRecord>,
}

impl ElboTrace {
    /// Bound after the last sweep, if any sweep ran.
    pub fn final_unheated(&self) -> Option<f64> {
        self.records.last().map(|r| r.unheated)
    }

    /// Largest relative decrease between consecutive sweeps at temperature 1
    /// (zero when the trace is monotone there).
    pub fn worst_t1_decrease(&self) -> f64 {
        let t1: Vec<&ElboRecord> = self
            .records
            .iter()
            .filter(|r| r.temperature == 1.0)
            .collect();
        let mut worst: f64 = 0.0;
        for pair in t1.windows(2) {
            let (prev, next) = (pair[0].unheated, pair[1].unheated);
            let drop = (prev - next) / prev.abs().max(1e-12);
            worst = worst.max(drop);
        }
        worst
    }
}

/// Fitted variational state plus everything needed to interpret it.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FitOutput {
    pub state: VariationalState,
    pub basis: SplineBasis,
    pub trace: ElboTrace,
    pub status: FitStatus,
    /// Settings the fit ran with, kept for post-processing and reports.
    pub hyper: Hyperparameters,
}

/// Fits the model: builds the spline basis from the pooled observation
/// times, then runs the annealed optimizer.
pub fn fit(
    data: &LongitudinalDataset,
    hyper: &Hyperparameters,
) -> Result<FitOutput, InferenceError> {
    let basis = SplineBasis::build(&data.pooled_times())?;
    fit_with_basis(data, hyper, basis)
}

/// Fits with a caller-supplied basis (exposed for tests that need to control
/// the basis dimension).
pub fn fit_with_basis(
    data: &LongitudinalDataset,
    hyper: &Hyperparameters,
    basis: SplineBasis,
) -> Result<FitOutput, InferenceError> {
    assert!(hyper.q_max >= 1, "need at least one factor");
    assert!(hyper.l_max >= 1, "need at least one component per factor");
    assert!(hyper.tol > 0.0, "tolerance must be positive");
    let schedule = make_schedule(&hyper.schedule)?;
    let model = ModelData::new(data, basis);
    let priors = Priors::new(hyper, data.p);
    let mut state = init_state(data, &model, hyper)?;

    let start = Instant::now();
    let mut trace = ElboTrace::default();
    let mut status = FitStatus::MaxIterExceeded;
    let mut sweep = 0usize;

    for (level, &temperature) in schedule.iter().enumerate() {
        let c = 1.0 / temperature;
        let final_level = level + 1 == schedule.len();
        if !final_level {
            for _ in 0..hyper.sweeps_per_temperature {
                sweep += 1;
                let parts = sweep_once(&mut state, data, &model, &priors, c)?;
                push_record(&mut trace, sweep, temperature, &parts, &start)?;
            }
        } else {
            let mut prev: Option<f64> = None;
            for _ in 0..hyper.max_iter {
                sweep += 1;
                let parts = sweep_once(&mut state, data, &model, &priors, c)?;
                let unheated = push_record(&mut trace, sweep, temperature, &parts, &start)?;
                if let Some(prev_val) = prev {
                    if (unheated - prev_val).abs() <= hyper.tol * prev_val.abs().max(1e-12) {
                        status = FitStatus::Converged;
                        break;
                    }
                }
                prev = Some(unheated);
            }
        }
    }

    let ModelData { basis, .. } = model;
    Ok(FitOutput {
        state,
        basis,
        trace,
        status,
        hyper: hyper.clone(),
    })
}

fn push_record(
    trace: &mut ElboTrace,
    sweep: usize,
    temperature: f64,
    parts: &ElboBreakdown,
    start: &Instant,
) -> Result<f64, InferenceError> {
    let heated = parts.heated(temperature);
    let unheated = parts.unheated();
    if !heated.is_finite() || !unheated.is_finite() {
        return Err(InferenceError::NonFiniteElbo { sweep, temperature });
    }
    trace.records.push(ElboRecord {
        sweep,
        temperature,
        heated,
        unheated,
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(unheated)
}

/// Runs one full sweep at inverse temperature `c` and returns the bound
/// decomposition evaluated at the post-sweep state.
pub fn sweep_once(
    state: &mut VariationalState,
    data: &LongitudinalDataset,
    model: &ModelData,
    priors: &Priors,
    c: f64,
) -> Result<ElboBreakdown, InferenceError> {
    let p = state.p();
    let q_max = state.q_max;
    let mut caches = SweepCaches::compute_base(state, data, model);

    // Mean curves: conditionally independent across variables.
    let new_means: Result<Vec<GaussianBlock>, InferenceError> = (0..p)
        .into_par_iter()
        .map(|j| {
            mean_block(
                &state.noise[j],
                &state.smooth_mean[j],
                &state.loadings[j],
                model,
                &caches,
                priors,
                j,
                c,
            )
        })
        .collect();
    for (j, block) in new_means?.into_iter().enumerate() {
        state.mean_coeffs[j] = block;
    }

    caches.refresh_loading_weights(state, data, model);

    // Eigenfunction coefficients: serial, maintaining per-factor trajectories.
    // These run before the loadings so that a fresh start — where the factor
    // trajectories are random noise — first shapes the trajectories under the
    // noncommittal loading initialization; updating the loadings on unshaped
    // trajectories collapses them instead, and the collapse is absorbing.
    for q in 0..q_max {
        for l in 0..state.l_max {
            update_eigen_coeffs(state, model, &mut caches, priors, q, l, c)?;
        }
    }
    caches.refresh_eh(state, model);

    // Scores: conditionally independent across subjects; factors sequential
    // within a subject, with the subject's trajectory cache kept current.
    {
        let eigen = &state.eigen_coeffs;
        let l_max = state.l_max;
        let SweepCaches {
            g,
            eh,
            ytilde,
            rho,
            bmm,
            b2w,
            ..
        } = &mut caches;
        let (eh, ytilde, rho, bmm, b2w) = (&*eh, &*ytilde, &*rho, &*bmm, &*b2w);
        state
            .scores
            .par_iter_mut()
            .zip(g.par_iter_mut())
            .enumerate()
            .try_for_each(|(i, (scores_i, g_i))| -> Result<(), InferenceError> {
                for q in 0..q_max {
                    let block = crate::inference::updates::score_block(
                        &eigen[q],
                        g_i,
                        &eh[i][q],
                        &ytilde[i][q],
                        &rho[q],
                        bmm,
                        b2w[q],
                        &model.gram[i],
                        q,
                        c,
                    )?;
                    scores_i[q] = block;
                    g_i[q].fill(0.0);
                    for l in 0..l_max {
                        g_i[q].axpy(scores_i[q].mean[l], &eigen[q][l].mean, 1.0);
                    }
                }
                Ok(())
            })?;
    }
    caches.refresh_residual_stats(state, data, model);

    // Noise variances and their auxiliaries: independent across variables.
    let new_noise: Vec<_> = (0..p)
        .into_par_iter()
        .map(|j| {
            let sigma = noise_sigma_block(
                &state.mean_coeffs[j],
                &state.loadings[j],
                &state.noise_aux[j],
                model,
                &caches,
                j,
                c,
            );
            let aux = aux_block(&sigma, priors, c);
            (sigma, aux)
        })
        .collect();
    for (j, (sigma, aux)) in new_noise.into_iter().enumerate() {
        state.noise[j] = sigma;
        state.noise_aux[j] = aux;
    }

    update_smoothing_variances(state, priors, c);

    // Loadings: factors in order; variables within a factor are independent.
    for q in 0..q_max {
        let e_logit = state.sparsity[q].e_logit();
        let new_loadings: Vec<SpikeSlabBlock> = (0..p)
            .into_par_iter()
            .map(|j| {
                loading_block(
                    &state.loadings[j],
                    &state.mean_coeffs[j],
                    state.noise[j].e_inv(),
                    e_logit,
                    &caches,
                    j,
                    q,
                    c,
                )
            })
            .collect();
        for (j, block) in new_loadings.into_iter().enumerate() {
            state.loadings[j][q] = block;
        }
    }

    for q in 0..q_max {
        update_sparsity_weight(state, priors, q, c);
    }

    // Residual statistics are still current (nothing after the score stage
    // touches the trajectories), so the bound can reuse them.
    compute_elbo_parts_with_caches(state, model, priors, &caches)
}

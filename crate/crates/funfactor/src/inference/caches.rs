//! Sufficient statistics shared across coordinate updates within a sweep.
//!
//! Everything here is a projection of the current variational means onto the
//! subject designs; each piece is recomputed from scratch at well-defined
//! points of a sweep (so numerical drift cannot accumulate across sweeps)
//! and maintained incrementally only while a single stage runs.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::LongitudinalDataset;
use crate::inference::model::ModelData;
use crate::inference::state::VariationalState;

/// Cached projections of the current state.
///
/// Notation: `g[i][q]` are the spline coefficients of subject `i`'s
/// posterior-mean trajectory on factor `q`; `eh[i][q]` is the posterior
/// second-moment matrix of the factor-`q` eigenfunctions evaluated through
/// subject `i`'s design (`E[V^T C_i^T C_i V]`); the rest are sums of those
/// against the data, the loadings, and the noise precisions.
#[derive(Debug, Clone)]
pub struct SweepCaches {
    /// `[i][q]`, dimension `k`.
    pub g: Vec<Vec<DVector<f64>>>,
    /// `[i][q]`, `l_max x l_max`.
    pub eh: Vec<Vec<DMatrix<f64>>>,
    /// `s[q] = sum_i S_i g[i][q]`.
    pub s: Vec<DVector<f64>>,
    /// `gram_g[(q, q')] = sum_i g[i][q]^T S_i g[i][q']`.
    pub gram_g: DMatrix<f64>,
    /// `h[q] = sum_i (tr(eh[i][q] S_score) + m^T eh[i][q] m)`.
    pub h: Vec<f64>,
    /// `p x q_max`; `v[(j, q)] = sum_i y_ij^T C_i g[i][q]`.
    pub v: DMatrix<f64>,
    /// `bmm[(q, q')] = sum_j E[b_jq] E[b_jq'] E[1/sigma_eps_j^2]`.
    pub bmm: DMatrix<f64>,
    /// `b2w[q] = sum_j E[b_jq^2] E[1/sigma_eps_j^2]`.
    pub b2w: Vec<f64>,
    /// `rho[q] = sum_j E[b_jq] E[1/sigma_eps_j^2] mean_coeffs[j]`.
    pub rho: Vec<DVector<f64>>,
    /// `ytilde[i][q] = C_i^T (Y_i wb_q)` with `wb_q[j] = E[b_jq] E[1/sigma_eps_j^2]`.
    pub ytilde: Vec<Vec<DVector<f64>>>,
}

impl SweepCaches {
    /// Builds every cache fresh from the current state.
    pub fn compute(
        state: &VariationalState,
        data: &LongitudinalDataset,
        model: &ModelData,
    ) -> SweepCaches {
        let mut caches = SweepCaches::compute_base(state, data, model);
        caches.refresh_loading_weights(state, data, model);
        caches
    }

    /// Builds the caches that do not fold in loadings or noise precisions:
    /// enough for the residual moments, and the starting point of a sweep.
    pub fn compute_base(
        state: &VariationalState,
        data: &LongitudinalDataset,
        model: &ModelData,
    ) -> SweepCaches {
        let (q_max, k) = (state.q_max, state.k);
        let n = state.n_subjects();
        let mut caches = SweepCaches {
            g: vec![vec![DVector::zeros(k); q_max]; n],
            eh: vec![vec![DMatrix::zeros(state.l_max, state.l_max); q_max]; n],
            s: vec![DVector::zeros(k); q_max],
            gram_g: DMatrix::zeros(q_max, q_max),
            h: vec![0.0; q_max],
            v: DMatrix::zeros(state.p(), q_max),
            bmm: DMatrix::zeros(q_max, q_max),
            b2w: vec![0.0; q_max],
            rho: vec![DVector::zeros(k); q_max],
            ytilde: vec![vec![DVector::zeros(k); q_max]; n],
        };
        caches.refresh_all_g(state);
        caches.refresh_eh(state, model);
        caches.refresh_residual_stats(state, data, model);
        caches
    }

    /// Recomputes `g[i][q]` for every subject and factor.
    pub fn refresh_all_g(&mut self, state: &VariationalState) {
        for i in 0..state.n_subjects() {
            for q in 0..state.q_max {
                self.g[i][q] = state.factor_coef(i, q);
            }
        }
    }

    /// Recomputes `g[i][q]` for one factor across subjects (after an
    /// eigenfunction coefficient update).
    pub fn refresh_factor_g(&mut self, state: &VariationalState, q: usize) {
        for i in 0..state.n_subjects() {
            self.g[i][q] = state.factor_coef(i, q);
        }
    }

    /// Recomputes `g[i][q]` for a single subject and factor (after a score update).
    pub fn refresh_subject_g(&mut self, state: &VariationalState, i: usize, q: usize) {
        self.g[i][q] = state.factor_coef(i, q);
    }

    /// Recomputes the eigenfunction second-moment matrices.
    pub fn refresh_eh(&mut self, state: &VariationalState, model: &ModelData) {
        let l_max = state.l_max;
        self.eh
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, per_subject)| {
                let gram_i = &model.gram[i];
                for (q, eh) in per_subject.iter_mut().enumerate() {
                    let blocks = &state.eigen_coeffs[q];
                    // S_i mu_l for every component, then pairwise dots.
                    let mut smu = DMatrix::zeros(state.k, l_max);
                    for l in 0..l_max {
                        smu.column_mut(l).gemv(1.0, gram_i, &blocks[l].mean, 0.0);
                    }
                    for l in 0..l_max {
                        for l2 in l..l_max {
                            let val = blocks[l].mean.dot(&smu.column(l2).clone_owned());
                            eh[(l, l2)] = val;
                            eh[(l2, l)] = val;
                        }
                        eh[(l, l)] += gram_i.dot(&blocks[l].cov);
                    }
                }
            });
    }

    /// Recomputes `s`, `gram_g`, `h`, and `v` from the current `g` and `eh`.
    pub fn refresh_residual_stats(
        &mut self,
        state: &VariationalState,
        data: &LongitudinalDataset,
        model: &ModelData,
    ) {
        let q_max = state.q_max;
        for q in 0..q_max {
            self.s[q].fill(0.0);
            self.h[q] = 0.0;
        }
        self.gram_g.fill(0.0);
        for i in 0..state.n_subjects() {
            let gram_i = &model.gram[i];
            let mut sg = Vec::with_capacity(q_max);
            for q in 0..q_max {
                let sgi = gram_i * &self.g[i][q];
                self.s[q] += &sgi;
                sg.push(sgi);
            }
            for q in 0..q_max {
                for q2 in q..q_max {
                    let val = self.g[i][q].dot(&sg[q2]);
                    self.gram_g[(q, q2)] += val;
                    if q2 != q {
                        self.gram_g[(q2, q)] += val;
                    }
                }
                let score = &state.scores[i][q];
                let ehm = &self.eh[i][q] * &score.mean;
                self.h[q] += self.eh[i][q].dot(&score.cov) + score.mean.dot(&ehm);
            }
        }

        // Data inner products against the posterior-mean factor trajectories.
        let columns: Vec<DVector<f64>> = (0..q_max)
            .into_par_iter()
            .map(|q| {
                let mut vq = DVector::zeros(state.p());
                for (i, subject) in data.subjects.iter().enumerate() {
                    let u = &model.designs[i] * &self.g[i][q];
                    vq.gemv_tr(1.0, &subject.values, &u, 1.0);
                }
                vq
            })
            .collect();
        for (q, col) in columns.into_iter().enumerate() {
            self.v.column_mut(q).copy_from(&col);
        }
    }

    /// Recomputes every cache that folds in the loadings and noise precisions.
    pub fn refresh_loading_weights(
        &mut self,
        state: &VariationalState,
        data: &LongitudinalDataset,
        model: &ModelData,
    ) {
        let q_max = state.q_max;
        let p = state.p();
        self.bmm.fill(0.0);
        let mut wb = DMatrix::zeros(p, q_max);
        for q in 0..q_max {
            self.b2w[q] = 0.0;
            self.rho[q].fill(0.0);
        }
        for j in 0..p {
            let w = state.noise[j].e_inv();
            for q in 0..q_max {
                let eb = state.loadings[j][q].e_b();
                wb[(j, q)] = eb * w;
                self.b2w[q] += state.loadings[j][q].e_b_sq() * w;
                self.rho[q].axpy(eb * w, &state.mean_coeffs[j].mean, 1.0);
                for q2 in q..q_max {
                    let val = eb * state.loadings[j][q2].e_b() * w;
                    self.bmm[(q, q2)] += val;
                    if q2 != q {
                        self.bmm[(q2, q)] += val;
                    }
                }
            }
        }

        let rows: Vec<Vec<DVector<f64>>> = (0..state.n_subjects())
            .into_par_iter()
            .map(|i| {
                let subject = &data.subjects[i];
                (0..q_max)
                    .map(|q| {
                        let weighted = &subject.values * wb.column(q);
                        model.designs[i].transpose() * weighted
                    })
                    .collect()
            })
            .collect();
        self.ytilde = rows;
    }
}

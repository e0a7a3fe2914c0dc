//! Per-subject design matrices and data projections computed once per fit.

use nalgebra::DMatrix;

use crate::data::LongitudinalDataset;
use crate::splines::SplineBasis;

/// Fixed quantities shared by every update: subject designs `C_i`, their
/// Gram matrices, and the data projections `sum_i C_i^T y_ij`. Nothing here
/// scales worse than `p * k` in memory.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub basis: SplineBasis,
    /// Design columns.
    pub k: usize,
    /// Total observation count over all subjects.
    pub n_total: usize,
    /// `C_i`, one `n_i x k` matrix per subject.
    pub designs: Vec<DMatrix<f64>>,
    /// `S_i = C_i^T C_i`.
    pub gram: Vec<DMatrix<f64>>,
    /// `S = sum_i S_i`.
    pub gram_total: DMatrix<f64>,
    /// `k x p`; column `j` is `sum_i C_i^T y_ij`.
    pub proj: DMatrix<f64>,
    /// `sum_i ||y_ij||^2` per variable.
    pub y_sq: Vec<f64>,
}

impl ModelData {
    pub fn new(data: &LongitudinalDataset, basis: SplineBasis) -> ModelData {
        let k = basis.num_cols();
        let p = data.p;
        let mut designs = Vec::with_capacity(data.n_subjects());
        let mut gram = Vec::with_capacity(data.n_subjects());
        let mut gram_total = DMatrix::zeros(k, k);
        let mut proj = DMatrix::zeros(k, p);
        let mut y_sq = vec![0.0; p];
        let mut n_total = 0;
        for s in &data.subjects {
            let c = basis.design(&s.times);
            let g = c.transpose() * &c;
            gram_total += &g;
            n_total += s.times.len();
            proj.gemm_tr(1.0, &c, &s.values, 1.0);
            for j in 0..p {
                y_sq[j] += s.values.column(j).norm_squared();
            }
            designs.push(c);
            gram.push(g);
        }
        ModelData {
            basis,
            k,
            n_total,
            designs,
            gram,
            gram_total,
            proj,
            y_sq,
        }
    }
}

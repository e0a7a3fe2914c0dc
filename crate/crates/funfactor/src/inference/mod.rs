//! Annealed mean-field variational inference with closed-form updates.
//!
//! [`fit`] is the entry point. The submodules split the work: [`model`]
//! precomputes per-subject design quantities, [`state`] holds the factorized
//! posterior, [`caches`] maintains the sufficient statistics every update
//! shares, [`updates`] implements the heated coordinate updates, [`elbo`]
//! evaluates the (heated) bound, [`schedule`] builds temperature ladders, and
//! [`fit`](mod@fit) sequences sweeps and convergence checks.

pub mod caches;
pub mod elbo;
pub mod fit;
pub mod model;
pub mod schedule;
pub mod state;
pub mod updates;

pub use caches::SweepCaches;
pub use elbo::{compute_elbo, compute_elbo_parts, ElboBreakdown, Term};
pub use fit::{fit, fit_with_basis, sweep_once, ElboRecord, ElboTrace, FitOutput, FitStatus};
pub use model::ModelData;
pub use schedule::make_schedule;
pub use state::{
    init_state, BetaBlock, GaussianBlock, IgBlock, SpikeSlabBlock, VariationalState,
};
pub use updates::{
    cholesky_with_jitter, expected_residual_sq, update_eigen_coeffs, update_loading_pair,
    update_mean_coeffs, update_noise_variance, update_scores, update_smooth_eigen,
    update_smooth_mean, update_smoothing_variances, update_sparsity_weight, Priors,
};

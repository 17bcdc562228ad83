//! Linear-estimator baselines (kernel ridge regression), Monte-Carlo risk,
//! bump functions and the gradient-gap estimator.

pub mod bump;
pub mod gap;
pub mod kernels;
pub mod krr;
pub mod risk;

pub use bump::{bump_g, check_bump_lemma, BumpCheck, BumpSpec};
pub use gap::{grad_gap_estimate, sample_theta_ball, GapRow};
pub use kernels::{gram, kernel_eval, KernelSpec};
pub use krr::{default_ridge_grid, krr_fit, krr_predict, select_ridge, KrrModel, RidgeSelection};
pub use risk::{mc_excess_risk, McEstimate};

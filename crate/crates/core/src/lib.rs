//! Teacher-student experiments for two-layer ReLU regression on the unit
//! sphere: two-phase training (Langevin dynamics, then gradient descent on
//! the first layer), closed-form population risk, and kernel ridge
//! baselines.

pub mod analytic;
pub mod assignment;
pub mod baselines;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod train;

pub use analytic::{
    excess_risk, expected_grad, expected_objective, l2_distance_sq, pair_integral_i,
    pair_integral_j, PairGradient,
};
pub use data::{load_dataset, save_dataset, Dataset, NoiseConfig, NoiseKind};
pub use error::{Error, Result};
pub use model::{
    clip_deriv, clip_scalar, empirical_grad_phase1, empirical_grad_phase2,
    empirical_objective_phase1, empirical_objective_phase2, forward, rescale, ClipConfig,
    StudentParams, TeacherParams, TwoLayerNet,
};
pub use train::{
    match_neurons, phase1_gld, phase2_gd, run_two_phase, NeuronMatching, RiskReport, TraceRecord,
    TrainConfig, TwoPhaseRun,
};

//! Two-phase training: gradient Langevin dynamics on the clipped,
//! weight-decayed objective, a rescaling step that moves the second layer
//! to `+-1`, then plain gradient descent on the first layer.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{excess_risk, expected_objective};
use crate::assignment::min_cost_assignment;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    empirical_objective_phase2, phase1_value_and_grad, phase2_value_and_grad, rescale, ClipConfig,
    StudentParams, TeacherParams, TwoLayerNet,
};
use crate::rng::{stream_rng, Stream};

/// Abort once the objective exceeds this multiple of its starting value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Starting values below this are raised to it before applying [`DIVERGENCE_FACTOR`].
pub const DIVERGENCE_FLOOR: f64 = 1e-6;

/// Hyperparameters of the two-phase schedule. `k2_max` is a global
/// iteration counter: phase II runs iterations `k1_max + 1 ..= k2_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub beta: f64,
    pub lambda: f64,
    pub clip_radius: f64,
    pub k1_max: usize,
    pub k2_max: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    pub trace_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta1: 0.01,
            eta2: 0.01,
            beta: 100.0,
            lambda: 0.01,
            clip_radius: ClipConfig::DEFAULT_RADIUS,
            k1_max: 1000,
            k2_max: 2000,
            seed: 0,
            init_scale: 1.0,
            trace_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("beta", self.beta),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "init_scale must be >= 0, got {}",
                self.init_scale
            )));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidParameter("trace_stride must be >= 1".into()));
        }
        ClipConfig::new(self.clip_radius)?;
        Ok(())
    }

    pub fn clip(&self) -> ClipConfig {
        ClipConfig::new(self.clip_radius).expect("validated clip radius")
    }

    pub fn phase2_steps(&self) -> usize {
        self.k2_max.saturating_sub(self.k1_max)
    }

    fn records(&self, iter: usize, last: usize) -> bool {
        iter % self.trace_stride == 0 || iter == last
    }
}

/// One traced iterate. In phase I `empirical_objective` is the clipped,
/// regularized training objective and `expected_objective` its population
/// counterpart; in phase II they are the half MSE and half squared distance
/// to the teacher. `excess_risk` is always measured on raw parameters, using
/// the rescaled snapshot during phase I.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub phase: u8,
    pub empirical_objective: f64,
    pub expected_objective: f64,
    pub excess_risk: f64,
}

/// Scaled Gaussian increments `sqrt(2 eta / beta) * xi`.
#[derive(Clone, Copy, Debug)]
pub struct LangevinNoise {
    scale: f64,
}

impl LangevinNoise {
    pub fn new(eta: f64, beta: f64) -> Self {
        Self {
            scale: (2.0 * eta / beta).sqrt(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Overwrites `out` with fresh noise.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for v in out {
            *v = self.scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

struct DivergenceGuard {
    initial: f64,
    limit: f64,
}

impl DivergenceGuard {
    fn new(initial: f64) -> Self {
        Self {
            initial,
            limit: DIVERGENCE_FACTOR * initial.max(DIVERGENCE_FLOOR),
        }
    }

    fn check(&self, iter: usize, value: f64) -> Result<()> {
        if !value.is_finite() || value > self.limit {
            return Err(Error::Divergence {
                iter,
                value,
                initial: self.initial,
            });
        }
        Ok(())
    }
}

/// Runs `k1_max` Langevin steps
/// `theta <- theta - eta1 grad L(theta) + sqrt(2 eta1 / beta) xi`.
pub fn phase1_gld<R: Rng + ?Sized>(
    params0: &StudentParams,
    data: &Dataset,
    teacher: &TeacherParams,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(StudentParams, Vec<TraceRecord>)> {
    cfg.validate()?;
    let clip = cfg.clip();
    let noise = LangevinNoise::new(cfg.eta1, cfg.beta);
    let mut params = params0.clone();
    let mut theta = params.to_flat();
    let mut xi = vec![0.0; theta.len()];
    let (mut value, mut grad) = phase1_value_and_grad(&params, data, cfg.lambda, clip)?;
    let guard = DivergenceGuard::new(value);
    guard.check(0, value)?;

    let mut trace = Vec::with_capacity(cfg.k1_max / cfg.trace_stride + 1);
    for iter in 1..=cfg.k1_max {
        noise.fill(rng, &mut xi);
        for ((t, g), z) in theta.iter_mut().zip(&grad).zip(&xi) {
            *t += -cfg.eta1 * g + z;
        }
        params.assign_flat(&theta);
        (value, grad) = phase1_value_and_grad(&params, data, cfg.lambda, clip)?;
        guard.check(iter, value)?;
        if cfg.records(iter, cfg.k1_max) {
            trace.push(TraceRecord {
                iter,
                phase: 1,
                empirical_objective: value,
                expected_objective: expected_objective(&params, teacher, cfg.lambda, clip)?,
                excess_risk: excess_risk(&rescale(&params, clip), teacher)?,
            });
        }
    }
    Ok((params, trace))
}

/// Gradient descent on the first layer only, iterations `k1_max + 1 ..= k2_max`.
/// The second layer must already be `+-1`.
pub fn phase2_gd(
    params_rescaled: &StudentParams,
    data: &Dataset,
    teacher: &TeacherParams,
    cfg: &TrainConfig,
) -> Result<(StudentParams, Vec<TraceRecord>)> {
    cfg.validate()?;
    let mut params = params_rescaled.clone();
    let (mut value, mut grad) = phase2_value_and_grad(&params, data)?;
    let guard = DivergenceGuard::new(value);
    guard.check(cfg.k1_max, value)?;

    let mut trace = Vec::with_capacity(cfg.phase2_steps() / cfg.trace_stride + 1);
    for iter in cfg.k1_max + 1..=cfg.k2_max {
        params.w_mut().scaled_add(-cfg.eta2, &grad);
        (value, grad) = phase2_value_and_grad(&params, data)?;
        guard.check(iter, value)?;
        if cfg.records(iter, cfg.k2_max) {
            let risk = excess_risk(&params, teacher)?;
            trace.push(TraceRecord {
                iter,
                phase: 2,
                empirical_objective: value,
                expected_objective: 0.5 * risk,
                excess_risk: risk,
            });
        }
    }
    Ok((params, trace))
}

/// Gaussian initialization `theta ~ N(0, scale^2 I)`.
pub fn gaussian_init<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    scale: f64,
    rng: &mut R,
) -> StudentParams {
    let mut draw = || scale * rng.sample::<f64, _>(StandardNormal);
    let a = Array1::from_shape_simple_fn(m, &mut draw);
    let w = Array2::from_shape_simple_fn((m, d), &mut draw);
    TwoLayerNet::new(a, w).expect("finite draws")
}

/// End-of-run summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiskReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub n: usize,
    /// Excess risk of the rescaled initialization.
    pub initial_excess_risk: f64,
    /// Excess risk right after phase I and the rescale.
    pub switch_excess_risk: f64,
    pub final_excess_risk: f64,
    pub phase1_final_objective: Option<f64>,
    pub phase1_final_expected_objective: Option<f64>,
    pub phase2_initial_objective: f64,
    pub phase2_final_objective: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TwoPhaseRun {
    pub params: StudentParams,
    /// Rescaled parameters at the phase switch.
    pub switch_params: StudentParams,
    pub trace: Vec<TraceRecord>,
    pub report: RiskReport,
}

/// Initialization, phase I, rescale, phase II. Initialization and Langevin
/// noise come from separate streams of `cfg.seed`.
pub fn run_two_phase(
    teacher: &TeacherParams,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<TwoPhaseRun> {
    cfg.validate()?;
    let started = Instant::now();
    let clip = cfg.clip();
    let mut init_rng = stream_rng(cfg.seed, Stream::Init);
    let init = gaussian_init(
        teacher.width(),
        teacher.dim(),
        cfg.init_scale,
        &mut init_rng,
    );
    let initial_excess_risk = excess_risk(&rescale(&init, clip), teacher)?;

    let mut langevin_rng = stream_rng(cfg.seed, Stream::Langevin);
    let (phase1, mut trace) = phase1_gld(&init, data, teacher, cfg, &mut langevin_rng)?;
    let switch_params = rescale(&phase1, clip);
    let phase2_initial_objective = empirical_objective_phase2(&switch_params, data)?;
    let (params, trace2) = phase2_gd(&switch_params, data, teacher, cfg)?;

    let phase1_last = trace.last().cloned();
    let phase2_final_objective = trace2
        .last()
        .map(|r| r.empirical_objective)
        .unwrap_or(phase2_initial_objective);
    trace.extend(trace2);

    let report = RiskReport {
        config: cfg.clone(),
        seed: cfg.seed,
        n: data.len(),
        initial_excess_risk,
        switch_excess_risk: excess_risk(&switch_params, teacher)?,
        final_excess_risk: excess_risk(&params, teacher)?,
        phase1_final_objective: phase1_last.as_ref().map(|r| r.empirical_objective),
        phase1_final_expected_objective: phase1_last.as_ref().map(|r| r.expected_objective),
        phase2_initial_objective,
        phase2_final_objective,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(TwoPhaseRun {
        params,
        switch_params,
        trace,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronPair {
    pub teacher_unit: usize,
    pub student_unit: usize,
    /// `|| |a_k| w_k - w0_j ||`.
    pub distance: f64,
    pub sign_agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronMatching {
    pub pairs: Vec<NeuronPair>,
    pub total_distance: f64,
    pub max_distance: f64,
    pub all_signs_agree: bool,
}

/// Minimum-cost one-to-one assignment of student units to teacher units
/// under the cost `|| |a_k| w_k - w0_j ||`; signs are compared afterwards.
pub fn match_neurons(student: &StudentParams, teacher: &TeacherParams) -> Result<NeuronMatching> {
    let m = teacher.width();
    if student.width() != m || student.dim() != teacher.dim() {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: student.width(),
        });
    }
    let cost = Array2::from_shape_fn((m, m), |(j, k)| {
        let scale = student.a()[k].abs();
        student
            .unit(k)
            .iter()
            .zip(teacher.w().row(j))
            .map(|(&s, &t)| (scale * s - t).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    let assign = min_cost_assignment(&cost);
    let pairs: Vec<NeuronPair> = assign
        .iter()
        .enumerate()
        .map(|(j, &k)| NeuronPair {
            teacher_unit: j,
            student_unit: k,
            distance: cost[[j, k]],
            sign_agrees: (student.a()[k] >= 0.0) == (teacher.a()[j] > 0.0),
        })
        .collect();
    Ok(NeuronMatching {
        total_distance: pairs.iter().map(|p| p.distance).sum(),
        max_distance: pairs.iter().map(|p| p.distance).fold(0.0, f64::max),
        all_signs_agree: pairs.iter().all(|p| p.sign_agrees),
        pairs,
    })
}

//! Central finite-difference checks of the analytic gradients.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{expected_grad, expected_objective, pair_integral_i, pair_integral_j};
use crate::data::{Dataset, NoiseConfig};
use crate::error::Result;
use crate::model::{
    empirical_grad_phase1, empirical_grad_phase2, empirical_objective_phase1,
    empirical_objective_phase2, ClipConfig, StudentParams, TeacherParams, TwoLayerNet,
};
use crate::rng::{stream_rng_raw, StreamRng};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Pre-activations closer than this to a ReLU kink disqualify a test point.
pub const KINK_MARGIN: f64 = 1e-3;

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = norm(a).max(norm(b));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Candidate points rejected for sitting too close to a kink.
    pub rejected: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

fn gaussian_net(m: usize, d: usize, rng: &mut StreamRng) -> TwoLayerNet {
    let theta: Vec<f64> = (0..(d + 1) * m)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    TwoLayerNet::from_flat(&theta, m, d).expect("finite draws")
}

fn far_from_kinks(net: &TwoLayerNet, data: &Dataset) -> bool {
    let z = data.x().dot(&net.w().t());
    z.iter().all(|v| v.abs() >= KINK_MARGIN)
}

fn random_problem(
    d: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(TeacherParams, Dataset, StreamRng)> {
    let mut rng = stream_rng_raw(seed, 0x6c);
    let teacher = TeacherParams::random_well_conditioned(m, d, 0.5, &mut rng)?;
    let data = Dataset::generate(&teacher, n, NoiseConfig::default(), seed);
    Ok((teacher, data, rng))
}

/// `J` against differences of `I` in its first argument.
pub fn check_pair_gradient(d: usize, points: usize, seed: u64) -> GradCheckReport {
    let mut rng = stream_rng_raw(seed, 0x6a);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let v = Array1::from_iter((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let fd = central_difference(
            |x| pair_integral_i(Array1::from(x.to_vec()).view(), v.view()),
            &w,
            DEFAULT_STEP,
        );
        let analytic = pair_integral_j(Array1::from(w).view(), v.view()).value;
        worst = worst.max(relative_error(analytic.as_slice().unwrap(), &fd));
    }
    GradCheckReport {
        name: format!("pair_gradient_j(d={d})"),
        points,
        max_rel_err: worst,
        tolerance: 1e-6,
        rejected: 0,
    }
}

/// Population gradient against differences of the population objective.
pub fn check_expected_grad(
    d: usize,
    m: usize,
    points: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (teacher, _, mut rng) = random_problem(d, m, 1, seed)?;
    let clip = ClipConfig::default();
    let lambda = 0.01;
    let mut worst = 0.0f64;
    for _ in 0..points {
        let net = gaussian_net(m, d, &mut rng);
        let theta = net.to_flat();
        let analytic = expected_grad(&net, &teacher, lambda, clip)?;
        let fd = central_difference(
            |x| {
                let p = TwoLayerNet::from_flat(x, m, d).expect("same shape");
                expected_objective(&p, &teacher, lambda, clip).expect("same shape")
            },
            &theta,
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(&analytic, &fd));
    }
    Ok(GradCheckReport {
        name: format!("expected_grad(d={d}, m={m})"),
        points,
        max_rel_err: worst,
        tolerance: 1e-4,
        rejected: 0,
    })
}

/// Phase I empirical gradient against differences of the Phase I objective.
pub fn check_phase1_grad(
    d: usize,
    m: usize,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, data, mut rng) = random_problem(d, m, n, seed)?;
    let clip = ClipConfig::default();
    let lambda = 0.01;
    let (mut worst, mut rejected, mut done) = (0.0f64, 0, 0);
    while done < points {
        let net = gaussian_net(m, d, &mut rng);
        if !far_from_kinks(&net.clipped(clip), &data) {
            rejected += 1;
            continue;
        }
        let theta = net.to_flat();
        let analytic = empirical_grad_phase1(&net, &data, lambda, clip)?;
        let fd = central_difference(
            |x| {
                let p = TwoLayerNet::from_flat(x, m, d).expect("same shape");
                empirical_objective_phase1(&p, &data, lambda, clip).expect("same shape")
            },
            &theta,
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(&analytic, &fd));
        done += 1;
    }
    Ok(GradCheckReport {
        name: format!("empirical_grad_phase1(d={d}, m={m}, n={n})"),
        points,
        max_rel_err: worst,
        tolerance: 1e-5,
        rejected,
    })
}

/// Phase II first-layer gradient against differences of the Phase II objective.
pub fn check_phase2_grad(
    d: usize,
    m: usize,
    n: usize,
    points: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, data, mut rng) = random_problem(d, m, n, seed)?;
    let (mut worst, mut rejected, mut done) = (0.0f64, 0, 0);
    while done < points {
        let mut net: StudentParams = gaussian_net(m, d, &mut rng);
        net.a_mut()
            .mapv_inplace(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        if !far_from_kinks(&net, &data) {
            rejected += 1;
            continue;
        }
        let a = net.a().clone();
        let w_flat: Vec<f64> = net.w().iter().copied().collect();
        let analytic: Vec<f64> = empirical_grad_phase2(&net, &data)?
            .iter()
            .copied()
            .collect();
        let fd = central_difference(
            |x| {
                let w = ndarray::Array2::from_shape_vec((m, d), x.to_vec()).expect("same shape");
                let p = TwoLayerNet::new(a.clone(), w).expect("finite");
                empirical_objective_phase2(&p, &data).expect("rescaled")
            },
            &w_flat,
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(&analytic, &fd));
        done += 1;
    }
    Ok(GradCheckReport {
        name: format!("empirical_grad_phase2(d={d}, m={m}, n={n})"),
        points,
        max_rel_err: worst,
        tolerance: 1e-5,
        rejected,
    })
}

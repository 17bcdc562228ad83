//! Random-search estimate of `sup_theta ||grad R(theta) - grad L_n(theta)||`,
//! the uniform gap between population and empirical Phase I gradients.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::expected_grad;
use crate::data::{gen_labels, sample_sphere, Dataset, NoiseConfig};
use crate::error::{Error, Result};
use crate::model::{empirical_grad_phase1, ClipConfig, StudentParams, TeacherParams, TwoLayerNet};

/// `count` parameter vectors uniform in the ball of radius `radius` in
/// `R^{(d+1) m}`.
pub fn sample_theta_ball<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    radius: f64,
    count: usize,
    rng: &mut R,
) -> Vec<StudentParams> {
    let p = (d + 1) * m;
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let r = radius * rng.random::<f64>().powf(1.0 / p as f64);
            v.iter_mut().for_each(|x| *x *= r / norm);
            TwoLayerNet::from_flat(&v, m, d).expect("finite draws")
        })
        .collect()
}

/// Default search radius `sqrt((d + 1) m) R`.
pub fn default_theta_radius(m: usize, d: usize, clip: ClipConfig) -> f64 {
    (((d + 1) * m) as f64).sqrt() * clip.radius()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    pub n: usize,
    /// Max gap over the theta sample, one entry per dataset.
    pub trial_gaps: Vec<f64>,
    pub mean_gap: f64,
    pub max_gap: f64,
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Largest gradient gap over `thetas` for one dataset, given the population
/// gradients `expected` at the same points.
pub fn max_gap_on(
    data: &Dataset,
    thetas: &[StudentParams],
    expected: &[Vec<f64>],
    lambda: f64,
    clip: ClipConfig,
) -> Result<f64> {
    let mut best = 0.0f64;
    for (theta, g_pop) in thetas.iter().zip(expected) {
        let g_emp = empirical_grad_phase1(theta, data, lambda, clip)?;
        best = best.max(norm_diff(&g_emp, g_pop));
    }
    Ok(best)
}

/// For each `n`, draws `trials` datasets from `teacher` and records the
/// largest gap over the fixed sample `thetas`. The result is a lower
/// estimate of the supremum.
#[allow(clippy::too_many_arguments)]
pub fn grad_gap_estimate<R: Rng + ?Sized>(
    teacher: &TeacherParams,
    n_list: &[usize],
    trials: usize,
    thetas: &[StudentParams],
    lambda: f64,
    clip: ClipConfig,
    noise: NoiseConfig,
    rng: &mut R,
) -> Result<Vec<GapRow>> {
    if trials == 0 || thetas.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one trial and one theta".into(),
        ));
    }
    let expected = thetas
        .iter()
        .map(|t| expected_grad(t, teacher, lambda, clip))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let mut trial_gaps = Vec::with_capacity(trials);
        for _ in 0..trials {
            let x = sample_sphere(n, teacher.dim(), rng);
            let y: Array1<f64> = gen_labels(teacher, x.view(), noise, rng);
            let data = Dataset::new(x, y)?;
            trial_gaps.push(max_gap_on(&data, thetas, &expected, lambda, clip)?);
        }
        let mean_gap = trial_gaps.iter().sum::<f64>() / trials as f64;
        let max_gap = trial_gaps.iter().copied().fold(0.0, f64::max);
        rows.push(GapRow {
            n,
            trial_gaps,
            mean_gap,
            max_gap,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng_raw;

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = stream_rng_raw(2, 0);
        let thetas = sample_theta_ball(3, 4, 2.5, 200, &mut rng);
        let mut largest = 0.0f64;
        for t in &thetas {
            let r = t.sq_norm().sqrt();
            assert!(r <= 2.5 + 1e-12);
            largest = largest.max(r);
        }
        // In 15 dimensions almost all mass sits near the boundary.
        assert!(largest > 2.3);
    }
}

//! Localized bump functions built from three ReLU ridges per coordinate,
//! the hard instances behind the lower bound for linear estimators.
//!
//! In a frame whose first axis is the center `c`,
//!
//! ```text
//! g(x) = 1/(d-1) sum_{i>=2} [ -relu(x_i) + relu(x_i + 2 D x_1)/2 + relu(x_i - 2 D x_1)/2 ]
//! ```
//!
//! For `x_1 >= 0` each summand equals `max(2 D x_1 - |x_i|, 0) / 2` and for
//! `x_1 < 0` it equals `max(2 D |x_1| - |x_i|, 0) / 2`, so `g` vanishes
//! exactly where every off-axis coordinate satisfies `|x_i| >= 2 D |x_1|`.
//! [`check_bump_lemma`] tests the two box statements against this formula.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::sample_sphere_point;
use crate::error::{Error, Result};
use crate::linalg::orthonormal_frame;
use crate::model::relu;

/// Outside-point tolerance for `g = 0`.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BumpSpec {
    center: Array1<f64>,
    delta: f64,
    /// Rows form an orthonormal basis; row 0 is `center`.
    frame: Array2<f64>,
}

impl BumpSpec {
    pub fn new(center: Array1<f64>, delta: f64) -> Result<Self> {
        if center.len() < 2 {
            return Err(Error::InvalidParameter("bump needs d >= 2".into()));
        }
        let norm = center.dot(&center).sqrt();
        if (norm - 1.0).abs() > crate::data::UNIT_TOL {
            return Err(Error::NonUnitRow { row: 0, norm });
        }
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "bump width must lie in (0, 1/2], got {delta}"
            )));
        }
        let frame = orthonormal_frame(center.view());
        Ok(Self {
            center,
            delta,
            frame,
        })
    }

    /// Bump centered at the first standard basis vector.
    pub fn axis(d: usize, delta: f64) -> Result<Self> {
        let mut c = Array1::zeros(d);
        c[0] = 1.0;
        Self::new(c, delta)
    }

    pub fn center(&self) -> ArrayView1<'_, f64> {
        self.center.view()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn frame(&self) -> &Array2<f64> {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Coordinates of `x` in the frame.
    pub fn to_frame(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.frame.dot(&x)
    }

    /// Ambient point with the given frame coordinates.
    pub fn from_frame(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        self.frame.t().dot(&z)
    }

    /// `max_i |z_i - e1_i|` in frame coordinates.
    pub fn box_distance(&self, x: ArrayView1<'_, f64>) -> f64 {
        let z = self.to_frame(x);
        z.iter()
            .enumerate()
            .map(|(i, &v)| if i == 0 { (v - 1.0).abs() } else { v.abs() })
            .fold(0.0, f64::max)
    }
}

pub fn bump_g(spec: &BumpSpec, x: ArrayView1<'_, f64>) -> f64 {
    let z = spec.to_frame(x);
    let shift = 2.0 * spec.delta * z[0];
    let sum: f64 = z
        .iter()
        .skip(1)
        .map(|&zi| -relu(zi) + 0.5 * relu(zi + shift) + 0.5 * relu(zi - shift))
        .sum();
    sum / (spec.dim() - 1) as f64
}

/// Point on the sphere with `|z_i| <= delta` for `i >= 2` and
/// `1 - z_1 <= delta`, drawn by sampling the off-axis coordinates uniformly
/// in the box and solving for `z_1 > 0` (rejecting infeasible draws).
pub fn sample_inside<R: Rng + ?Sized>(spec: &BumpSpec, rng: &mut R) -> Array1<f64> {
    let d = spec.dim();
    let delta = spec.delta;
    loop {
        let mut z = Array1::zeros(d);
        let mut tail = 0.0;
        for v in z.iter_mut().skip(1) {
            *v = rng.random_range(-delta..=delta);
            tail += *v * *v;
        }
        if tail > 1.0 {
            continue;
        }
        z[0] = (1.0 - tail).sqrt();
        if 1.0 - z[0] <= delta {
            return spec.from_frame(z.view());
        }
    }
}

/// Uniform sphere point outside the `2 delta` box around the center.
pub fn sample_outside<R: Rng + ?Sized>(spec: &BumpSpec, rng: &mut R) -> Array1<f64> {
    loop {
        let x = sample_sphere_point(spec.dim(), rng);
        if spec.box_distance(x.view()) > 2.0 * spec.delta {
            return x;
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpCheck {
    pub d: usize,
    pub delta: f64,
    pub inside_points: usize,
    /// Inside points with `g < delta / 2`.
    pub inside_violations: usize,
    pub min_inside: f64,
    pub outside_points: usize,
    /// Outside points with `|g| > ZERO_TOL`.
    pub outside_violations: usize,
    pub max_abs_outside: f64,
    /// Frame coordinates of the worst inside and outside points.
    pub worst_inside: Vec<f64>,
    pub worst_outside: Vec<f64>,
}

impl BumpCheck {
    pub fn passed(&self) -> bool {
        self.inside_violations == 0 && self.outside_violations == 0
    }
}

/// Tests `g >= delta/2` on `points` inside points and `g = 0` on `points`
/// outside points.
pub fn check_bump_lemma<R: Rng + ?Sized>(spec: &BumpSpec, points: usize, rng: &mut R) -> BumpCheck {
    let half = 0.5 * spec.delta;
    let (mut inside_violations, mut min_inside, mut worst_inside) = (0, f64::INFINITY, Vec::new());
    for _ in 0..points {
        let x = sample_inside(spec, rng);
        let g = bump_g(spec, x.view());
        if g < half {
            inside_violations += 1;
        }
        if g < min_inside {
            min_inside = g;
            worst_inside = spec.to_frame(x.view()).to_vec();
        }
    }
    let (mut outside_violations, mut max_abs_outside, mut worst_outside) = (0, 0.0f64, Vec::new());
    for _ in 0..points {
        let x = sample_outside(spec, rng);
        let g = bump_g(spec, x.view()).abs();
        if g > ZERO_TOL {
            outside_violations += 1;
        }
        if g > max_abs_outside || worst_outside.is_empty() {
            max_abs_outside = max_abs_outside.max(g);
            worst_outside = spec.to_frame(x.view()).to_vec();
        }
    }
    BumpCheck {
        d: spec.dim(),
        delta: spec.delta,
        inside_points: points,
        inside_violations,
        min_inside,
        outside_points: points,
        outside_violations,
        max_abs_outside,
        worst_inside,
        worst_outside,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng_raw;
    use ndarray::array;

    #[test]
    fn value_at_center_and_on_axis() {
        for delta in [0.05, 0.25, 0.5] {
            let spec = BumpSpec::axis(4, delta).unwrap();
            assert!((bump_g(&spec, spec.center()) - delta).abs() < 1e-15);
        }
        let spec = BumpSpec::axis(3, 0.1).unwrap();
        assert_eq!(bump_g(&spec, array![0.0, 1.0, 0.0].view()), 0.0);
    }

    #[test]
    fn axis_frame_is_identity() {
        let spec = BumpSpec::axis(5, 0.1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(spec.frame()[[i, j]], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn rotated_center_matches_axis_bump() {
        let mut rng = stream_rng_raw(8, 0);
        let c = sample_sphere_point(6, &mut rng);
        let spec = BumpSpec::new(c, 0.2).unwrap();
        let axis = BumpSpec::axis(6, 0.2).unwrap();
        for _ in 0..50 {
            let x = sample_sphere_point(6, &mut rng);
            let z = spec.to_frame(x.view());
            assert!((bump_g(&spec, x.view()) - bump_g(&axis, z.view())).abs() < 1e-14);
        }
    }

    #[test]
    fn summands_are_half_hinges() {
        let mut rng = stream_rng_raw(9, 0);
        let spec = BumpSpec::axis(7, 0.3).unwrap();
        for _ in 0..200 {
            let x = sample_sphere_point(7, &mut rng);
            let want: f64 = x
                .iter()
                .skip(1)
                .map(|xi| 0.5 * (2.0 * 0.3 * x[0].abs() - xi.abs()).max(0.0))
                .sum::<f64>()
                / 6.0;
            assert!((bump_g(&spec, x.view()) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn samplers_respect_boxes() {
        let mut rng = stream_rng_raw(10, 0);
        for delta in [0.05, 0.5] {
            let spec = BumpSpec::axis(3, delta).unwrap();
            for _ in 0..100 {
                let x = sample_inside(&spec, &mut rng);
                assert!((x.dot(&x).sqrt() - 1.0).abs() < 1e-12);
                assert!(spec.box_distance(x.view()) <= delta + 1e-12);
                let y = sample_outside(&spec, &mut rng);
                assert!(spec.box_distance(y.view()) > 2.0 * delta);
            }
        }
    }

    // The two box statements do not hold for the formula as written; these
    // pin down concrete counterexamples.
    #[test]
    fn antipode_is_not_zero() {
        let spec = BumpSpec::axis(3, 0.1).unwrap();
        let g = bump_g(&spec, array![-1.0, 0.0, 0.0].view());
        assert!((g - 0.1).abs() < 1e-15);
    }

    #[test]
    fn outside_point_with_small_coordinate() {
        let spec = BumpSpec::axis(3, 0.1).unwrap();
        let x = array![0.6, 0.8, 0.0];
        assert!(spec.box_distance(x.view()) > 0.2);
        // Only the third coordinate contributes: max(0.12 - 0, 0) / 2 / 2.
        assert!((bump_g(&spec, x.view()) - 0.03).abs() < 1e-15);
    }

    #[test]
    fn inside_corner_falls_below_half_width() {
        let spec = BumpSpec::axis(3, 0.05).unwrap();
        let tail: f64 = 2.0 * 0.05f64.powi(2);
        let x = array![(1.0 - tail).sqrt(), 0.05, 0.05];
        assert!(spec.box_distance(x.view()) <= 0.05);
        assert!(bump_g(&spec, x.view()) < 0.025);
    }
}

//! Closed-form population quantities for ReLU networks with inputs drawn
//! uniformly from the unit sphere `S^{d-1}`.
//!
//! Everything reduces to the pairwise integral
//!
//! ```text
//! I(w, v) = E[relu(<w, x>) relu(<v, x>)]
//!         = |w| |v| (sin phi + (pi - phi) cos phi) / (2 pi d)
//! ```
//!
//! with `phi` the angle between `w` and `v`, and its `w`-gradient `J(w, v)`.

use std::f64::consts::PI;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{clip_deriv, ClipConfig, StudentParams, TeacherParams, TwoLayerNet};

/// Negative squared distances down to this value are rounding noise.
pub const NEGATIVE_SLACK: f64 = 1e-10;

/// Angle between two nonzero vectors, in `[0, pi]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PairAngle(f64);

impl PairAngle {
    /// `None` when either vector is zero.
    pub fn between(w: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> Option<Self> {
        let nw = w.dot(&w).sqrt();
        let nv = v.dot(&v).sqrt();
        if nw == 0.0 || nv == 0.0 {
            return None;
        }
        Some(Self::from_cosine(w.dot(&v) / (nw * nv)))
    }

    /// Rounding can push the cosine a few ulps outside `[-1, 1]`.
    pub fn from_cosine(c: f64) -> Self {
        Self(c.clamp(-1.0, 1.0).acos())
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

fn norms(w: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> (f64, f64, f64) {
    (w.dot(&w).sqrt(), v.dot(&v).sqrt(), w.dot(&v))
}

/// `E[relu(<w,x>) relu(<v,x>)]` for `x` uniform on the sphere of dimension
/// `d = w.len()`. Zero when either vector vanishes.
pub fn pair_integral_i(w: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(w.len(), v.len());
    let d = w.len() as f64;
    let (nw, nv, dot) = norms(w, v);
    if nw == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let phi = PairAngle::from_cosine(dot / (nw * nv)).radians();
    (phi.sin() + (PI - phi) * phi.cos()) * nw * nv / (2.0 * PI * d)
}

/// Gradient of [`pair_integral_i`] with respect to `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairGradient {
    pub value: Array1<f64>,
    /// Set when `w = 0`, where the gradient does not exist; `value` is then zero.
    pub degenerate: bool,
}

/// `J(w, v) = (|v| |w|^{-1} sin(phi) w + (pi - phi) v) / (2 pi d)`.
pub fn pair_integral_j(w: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> PairGradient {
    debug_assert_eq!(w.len(), v.len());
    let d = w.len() as f64;
    let (nw, nv, dot) = norms(w, v);
    if nw == 0.0 {
        return PairGradient {
            value: Array1::zeros(w.len()),
            degenerate: true,
        };
    }
    if nv == 0.0 {
        return PairGradient {
            value: Array1::zeros(w.len()),
            degenerate: false,
        };
    }
    let phi = PairAngle::from_cosine(dot / (nw * nv)).radians();
    let scale = 1.0 / (2.0 * PI * d);
    let cw = nv / nw * phi.sin() * scale;
    let cv = (PI - phi) * scale;
    PairGradient {
        value: &w * cw + &v * cv,
        degenerate: false,
    }
}

/// `sum_ij s_i t_j I(u_i, v_j)` over the units of two networks.
fn cross_term(a: &TwoLayerNet, b: &TwoLayerNet) -> f64 {
    let mut total = 0.0;
    for (ai, wi) in a.a().iter().zip(a.w().rows()) {
        for (bj, vj) in b.a().iter().zip(b.w().rows()) {
            total += ai * bj * pair_integral_i(wi, vj);
        }
    }
    total
}

/// `E[f_A(x)^2]`.
pub fn sq_norm_l2(net: &TwoLayerNet) -> f64 {
    cross_term(net, net)
}

/// Squared `L2(P_X)` distance between two networks on the same input dimension.
pub fn l2_distance_sq(net_a: &TwoLayerNet, net_b: &TwoLayerNet) -> Result<f64> {
    if net_a.dim() != net_b.dim() {
        return Err(Error::DimensionMismatch {
            expected: net_a.dim(),
            got: net_b.dim(),
        });
    }
    let value =
        cross_term(net_a, net_a) - 2.0 * cross_term(net_a, net_b) + cross_term(net_b, net_b);
    if value >= 0.0 {
        Ok(value)
    } else if value >= -NEGATIVE_SLACK {
        Ok(0.0)
    } else {
        Err(Error::NegativeDistance(value))
    }
}

fn check_pair(params: &StudentParams, teacher: &TeacherParams) -> Result<()> {
    if params.dim() != teacher.dim() {
        return Err(Error::DimensionMismatch {
            expected: teacher.dim(),
            got: params.dim(),
        });
    }
    Ok(())
}

/// Population objective `1/2 ||f(.; clip theta) - f_teacher||^2 + lambda ||theta||^2`
/// with the regularizer on raw parameters.
pub fn expected_objective(
    params: &StudentParams,
    teacher: &TeacherParams,
    lambda: f64,
    cfg: ClipConfig,
) -> Result<f64> {
    check_pair(params, teacher)?;
    let clipped = params.clipped(cfg);
    Ok(0.5 * l2_distance_sq(&clipped, teacher.net())? + lambda * params.sq_norm())
}

/// Gradient of [`expected_objective`] in the flat `theta` layout (second
/// layer first, then the first-layer rows).
///
/// With `abar = clip(a)`, `wbar = clip(w)` and teacher `(a0, w0)`:
///
/// ```text
/// d/da_j = [sum_i abar_i I(wbar_i, wbar_j) - sum_i a0_i I(w0_i, wbar_j)] clip'(a_j) + 2 lambda a_j
/// d/dw_j = abar_j [sum_i abar_i J(wbar_j, wbar_i) - sum_i a0_i J(wbar_j, w0_i)] (.) clip'(w_j) + 2 lambda w_j
/// ```
pub fn expected_grad(
    params: &StudentParams,
    teacher: &TeacherParams,
    lambda: f64,
    cfg: ClipConfig,
) -> Result<Vec<f64>> {
    check_pair(params, teacher)?;
    let m = params.width();
    let d = params.dim();
    let clipped = params.clipped(cfg);
    let (abar, wbar) = (clipped.a(), clipped.w());
    let (a0, w0) = (teacher.a(), teacher.w());

    let mut grad = vec![0.0; params.num_params()];
    for j in 0..m {
        let wj = wbar.row(j);
        let student: f64 = abar
            .iter()
            .zip(wbar.rows())
            .map(|(ai, wi)| ai * pair_integral_i(wi, wj))
            .sum();
        let target: f64 = a0
            .iter()
            .zip(w0.rows())
            .map(|(ai, wi)| ai * pair_integral_i(wi, wj))
            .sum();
        let aj = params.a()[j];
        grad[j] = (student - target) * clip_deriv(aj, cfg) + 2.0 * lambda * aj;

        let mut inner = Array1::<f64>::zeros(d);
        for (ai, wi) in abar.iter().zip(wbar.rows()) {
            let jv = pair_integral_j(wj, wi);
            if jv.degenerate {
                return Err(Error::DegenerateWeight { unit: j });
            }
            inner.scaled_add(*ai, &jv.value);
        }
        for (ai, wi) in a0.iter().zip(w0.rows()) {
            let jv = pair_integral_j(wj, wi);
            if jv.degenerate {
                return Err(Error::DegenerateWeight { unit: j });
            }
            inner.scaled_add(-*ai, &jv.value);
        }
        let raw = params.unit(j);
        let slot = &mut grad[m + j * d..m + (j + 1) * d];
        for ((g, &s), &r) in slot.iter_mut().zip(inner.iter()).zip(raw.iter()) {
            *g = abar[j] * s * clip_deriv(r, cfg) + 2.0 * lambda * r;
        }
    }
    Ok(grad)
}

/// Excess risk `||f_student - f_teacher||^2` of raw (post-rescale) parameters.
pub fn excess_risk(student: &StudentParams, teacher: &TeacherParams) -> Result<f64> {
    check_pair(student, teacher)?;
    l2_distance_sq(student, teacher.net())
}

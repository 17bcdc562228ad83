//! Two-layer ReLU networks, the smooth clipping map, and the empirical
//! objectives of both training phases.
//!
//! A network of width `m` on inputs in `R^d` is stored as a second layer
//! `a` (length `m`) and a first layer `w` of shape `(m, d)` whose row `k`
//! is the weight vector `w_k`. The flattened parameter vector `theta` used
//! by the Langevin phase lists `a_1..a_m` first and then the rows
//! `w_1, .., w_m`, for a total length of `(d + 1) * m`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

#[inline]
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// ReLU derivative with the convention `relu'(0) = 0`.
#[inline]
pub fn relu_deriv(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Radius of the clipping map `r -> R tanh(r|r| / 2R)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipConfig {
    radius: f64,
}

impl ClipConfig {
    pub const DEFAULT_RADIUS: f64 = 2.0;

    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 1.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "clip radius must be a finite value > 1, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self {
            radius: Self::DEFAULT_RADIUS,
        }
    }
}

/// `R tanh(r|r| / 2R)`: odd, increasing, bounded by `R`.
#[inline]
pub fn clip_scalar(r: f64, cfg: ClipConfig) -> f64 {
    let big_r = cfg.radius;
    big_r * (r * r.abs() / (2.0 * big_r)).tanh()
}

/// `|r| / cosh^2(r|r| / 2R)`, the derivative of [`clip_scalar`]. Never exceeds `4R`.
#[inline]
pub fn clip_deriv(r: f64, cfg: ClipConfig) -> f64 {
    let sech = 1.0 / (r * r.abs() / (2.0 * cfg.radius)).cosh();
    r.abs() * sech * sech
}

/// Width-`m` two-layer ReLU network `x -> sum_k a_k relu(<w_k, x>)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLayerNet {
    a: Array1<f64>,
    w: Array2<f64>,
}

/// Trainable student parameters `theta = (a, W)`.
pub type StudentParams = TwoLayerNet;

impl TwoLayerNet {
    /// `w` has shape `(m, d)`; row `k` is the first-layer vector of unit `k`.
    pub fn new(a: Array1<f64>, w: Array2<f64>) -> Result<Self> {
        if a.len() != w.nrows() {
            return Err(Error::DimensionMismatch {
                expected: w.nrows(),
                got: a.len(),
            });
        }
        if a.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite network parameter".into(),
            ));
        }
        Ok(Self { a, w })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            a: Array1::zeros(m),
            w: Array2::zeros((m, d)),
        }
    }

    pub fn width(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// Number of scalar parameters, `(d + 1) * m`.
    pub fn num_params(&self) -> usize {
        self.width() * (self.dim() + 1)
    }

    pub fn a(&self) -> &Array1<f64> {
        &self.a
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn a_mut(&mut self) -> &mut Array1<f64> {
        &mut self.a
    }

    pub fn w_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    pub fn unit(&self, k: usize) -> ArrayView1<'_, f64> {
        self.w.row(k)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.a.iter().chain(self.w.iter()).copied().collect()
    }

    pub fn from_flat(theta: &[f64], m: usize, d: usize) -> Result<Self> {
        let expected = (d + 1) * m;
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: theta.len(),
            });
        }
        let a = Array1::from(theta[..m].to_vec());
        let w = Array2::from_shape_vec((m, d), theta[m..].to_vec()).expect("length checked above");
        Self::new(a, w)
    }

    /// Overwrites the parameters from a flat vector of matching length.
    pub fn assign_flat(&mut self, theta: &[f64]) {
        let m = self.width();
        assert_eq!(theta.len(), self.num_params());
        self.a
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&theta[..m]);
        self.w
            .as_slice_mut()
            .expect("contiguous")
            .copy_from_slice(&theta[m..]);
    }

    /// Element-wise image under the clipping map.
    pub fn clipped(&self, cfg: ClipConfig) -> Self {
        Self {
            a: self.a.mapv(|v| clip_scalar(v, cfg)),
            w: self.w.mapv(|v| clip_scalar(v, cfg)),
        }
    }

    /// `||theta||^2 = sum_k (a_k^2 + ||w_k||^2)`.
    pub fn sq_norm(&self) -> f64 {
        self.a.iter().chain(self.w.iter()).map(|v| v * v).sum()
    }

    /// Network output at a single input, no clipping.
    pub fn eval(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.a
            .iter()
            .zip(self.w.rows())
            .map(|(&ak, wk)| ak * relu(wk.dot(&x)))
            .sum()
    }

    /// Outputs at every row of `x` (shape `(n, d)`).
    pub fn eval_batch(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let z = x.dot(&self.w.t());
        z.map_axis(Axis(1), |row| {
            row.iter()
                .zip(self.a.iter())
                .map(|(&zk, &ak)| ak * relu(zk))
                .sum()
        })
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        Ok(())
    }
}

/// The fixed data-generating network. Second-layer entries are `+-1`,
/// the first layer has spectral norm at most one and full row rank.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherParams {
    net: TwoLayerNet,
    singular_values: Vec<f64>,
}

impl TeacherParams {
    const NORM_SLACK: f64 = 1e-12;
    const RANK_TOL: f64 = 1e-12;

    pub fn new(a: Array1<f64>, w: Array2<f64>) -> Result<Self> {
        let net = TwoLayerNet::new(a, w)?;
        if let Some((unit, &value)) = net.a.iter().enumerate().find(|(_, v)| v.abs() != 1.0) {
            return Err(Error::InvalidParameter(format!(
                "teacher second layer must be +-1, unit {unit} has {value}"
            )));
        }
        let (m, d) = net.w.dim();
        if m > d {
            return Err(Error::InvalidParameter(format!(
                "teacher width {m} exceeds input dimension {d}"
            )));
        }
        let singular_values = linalg::singular_values(net.w.view());
        let top = singular_values.first().copied().unwrap_or(0.0);
        let bottom = singular_values.last().copied().unwrap_or(0.0);
        if top > 1.0 + Self::NORM_SLACK {
            return Err(Error::InvalidParameter(format!(
                "teacher spectral norm {top} exceeds 1"
            )));
        }
        if !(bottom > Self::RANK_TOL * top) {
            return Err(Error::InvalidParameter(
                "teacher first layer is rank deficient".into(),
            ));
        }
        Ok(Self {
            net,
            singular_values,
        })
    }

    /// `W = I_d`, `m = d`, first `ceil(d/2)` units positive and the rest negative.
    pub fn identity_half_signs(d: usize) -> Self {
        let positives = d - d / 2;
        let a = Array1::from_iter((0..d).map(|j| if j < positives { 1.0 } else { -1.0 }));
        Self::new(a, Array2::eye(d)).expect("identity teacher is valid")
    }

    /// Teacher with `W = diag(s) Q`: `Q` has orthonormal rows drawn from a
    /// random Gaussian matrix and `s` runs linearly from 1 down to
    /// `sigma_min`, so the singular values are exactly `s`. The first
    /// `ceil(m/2)` units are positive.
    pub fn random_well_conditioned<R: Rng + ?Sized>(
        m: usize,
        d: usize,
        sigma_min: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma_min must lie in (0, 1], got {sigma_min}"
            )));
        }
        if m == 0 || m > d {
            return Err(Error::InvalidParameter(format!(
                "teacher width {m} must lie in 1..={d}"
            )));
        }
        let mut q = Array2::<f64>::zeros((m, d));
        let mut j = 0;
        while j < m {
            let mut v: Array1<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            for _ in 0..2 {
                for i in 0..j {
                    let c = v.dot(&q.row(i));
                    v.scaled_add(-c, &q.row(i));
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm > 1e-8 {
                q.row_mut(j).assign(&(v / norm));
                j += 1;
            }
        }
        for (k, mut row) in q.rows_mut().into_iter().enumerate() {
            let s = if m == 1 {
                1.0
            } else {
                1.0 - (1.0 - sigma_min) * k as f64 / (m - 1) as f64
            };
            row *= s;
        }
        let positives = m - m / 2;
        let a = Array1::from_iter((0..m).map(|j| if j < positives { 1.0 } else { -1.0 }));
        Self::new(a, q)
    }

    pub fn net(&self) -> &TwoLayerNet {
        &self.net
    }

    pub fn a(&self) -> &Array1<f64> {
        self.net.a()
    }

    pub fn w(&self) -> &Array2<f64> {
        self.net.w()
    }

    pub fn width(&self) -> usize {
        self.net.width()
    }

    pub fn dim(&self) -> usize {
        self.net.dim()
    }

    /// Singular values of the first layer in decreasing order.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("m >= 1")
    }

    /// `sigma_1 / sigma_m`.
    pub fn condition_number(&self) -> f64 {
        self.singular_values[0] / self.sigma_min()
    }

    /// `(prod_j sigma_j) / sigma_m^m`.
    pub fn spectral_ratio(&self) -> f64 {
        let s_min = self.sigma_min();
        self.singular_values.iter().map(|s| s / s_min).product()
    }

    /// Stable hex fingerprint of the parameters, used to tie datasets to teachers.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.width() as u64).to_le_bytes());
        hasher.update((self.dim() as u64).to_le_bytes());
        for v in self.net.to_flat() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// Output at `x`, with every parameter passed through the clipping map first
/// when `clipped` is set.
pub fn forward(
    params: &StudentParams,
    x: ArrayView1<'_, f64>,
    clipped: bool,
    cfg: ClipConfig,
) -> Result<f64> {
    params.check_dim(x.len())?;
    if clipped {
        Ok(params
            .a
            .iter()
            .zip(params.w.rows())
            .map(|(&ak, wk)| {
                let z: f64 = wk
                    .iter()
                    .zip(x.iter())
                    .map(|(&wi, &xi)| clip_scalar(wi, cfg) * xi)
                    .sum();
                clip_scalar(ak, cfg) * relu(z)
            })
            .sum())
    } else {
        Ok(params.eval(x))
    }
}

fn check_data(params: &StudentParams, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.check_dim(data.dim())
}

/// Shared forward/backward pass for the half mean-squared error of `net`
/// (already clipped or raw, as the caller decides).
struct HalfMse {
    value: f64,
    /// d/d a_k of the data term, before any clip chain factor.
    grad_a: Array1<f64>,
    /// d/d w_k of the data term, before any clip chain factor.
    grad_w: Array2<f64>,
}

fn half_mse(net: &TwoLayerNet, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> HalfMse {
    let n = x.nrows() as f64;
    let z = x.dot(&net.w.t());
    let mut value = 0.0;
    let mut grad_a = Array1::zeros(net.width());
    // masked[i, k] = r_i * 1{z_ik > 0}
    let mut masked = Array2::zeros(z.raw_dim());
    for ((zi, yi), mut mi) in z.rows().into_iter().zip(y.iter()).zip(masked.rows_mut()) {
        let f: f64 = zi
            .iter()
            .zip(net.a.iter())
            .map(|(&zk, &ak)| ak * relu(zk))
            .sum();
        let r = f - yi;
        value += r * r;
        for (k, &zk) in zi.iter().enumerate() {
            grad_a[k] += r * relu(zk);
            mi[k] = r * relu_deriv(zk);
        }
    }
    let mut grad_w = masked.t().dot(&x);
    for (mut gk, &ak) in grad_w.rows_mut().into_iter().zip(net.a.iter()) {
        gk *= ak / n;
    }
    grad_a /= n;
    HalfMse {
        value: value / (2.0 * n),
        grad_a,
        grad_w,
    }
}

/// Phase I objective `(1/2n) sum (y_i - f(x_i; clip theta))^2 + lambda ||theta||^2`.
/// The regularizer acts on the raw parameters.
pub fn empirical_objective_phase1(
    params: &StudentParams,
    data: &Dataset,
    lambda: f64,
    cfg: ClipConfig,
) -> Result<f64> {
    check_data(params, data)?;
    let clipped = params.clipped(cfg);
    let pred = clipped.eval_batch(data.x());
    let n = data.len() as f64;
    let sse: f64 = pred
        .iter()
        .zip(data.y())
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    Ok(sse / (2.0 * n) + lambda * params.sq_norm())
}

/// Objective value and flat gradient of the Phase I objective.
pub fn phase1_value_and_grad(
    params: &StudentParams,
    data: &Dataset,
    lambda: f64,
    cfg: ClipConfig,
) -> Result<(f64, Vec<f64>)> {
    check_data(params, data)?;
    let clipped = params.clipped(cfg);
    let HalfMse {
        value,
        grad_a,
        grad_w,
    } = half_mse(&clipped, data.x(), data.y());
    let m = params.width();
    let mut grad = Vec::with_capacity(params.num_params());
    for k in 0..m {
        let ak = params.a[k];
        grad.push(grad_a[k] * clip_deriv(ak, cfg) + 2.0 * lambda * ak);
    }
    for (gk, wk) in grad_w.rows().into_iter().zip(params.w.rows()) {
        for (&g, &wi) in gk.iter().zip(wk.iter()) {
            grad.push(g * clip_deriv(wi, cfg) + 2.0 * lambda * wi);
        }
    }
    Ok((value + lambda * params.sq_norm(), grad))
}

/// Gradient of [`empirical_objective_phase1`] in the flat `theta` layout.
pub fn empirical_grad_phase1(
    params: &StudentParams,
    data: &Dataset,
    lambda: f64,
    cfg: ClipConfig,
) -> Result<Vec<f64>> {
    phase1_value_and_grad(params, data, lambda, cfg).map(|(_, g)| g)
}

fn check_rescaled(params: &StudentParams) -> Result<()> {
    match params.a.iter().enumerate().find(|(_, v)| v.abs() != 1.0) {
        Some((unit, &value)) => Err(Error::NotRescaled { unit, value }),
        None => Ok(()),
    }
}

/// Phase II objective `(1/2n) sum (y_i - f(x_i; theta))^2` on raw parameters.
pub fn empirical_objective_phase2(params: &StudentParams, data: &Dataset) -> Result<f64> {
    check_data(params, data)?;
    check_rescaled(params)?;
    let pred = params.eval_batch(data.x());
    let n = data.len() as f64;
    let sse: f64 = pred
        .iter()
        .zip(data.y())
        .map(|(p, y)| (y - p).powi(2))
        .sum();
    Ok(sse / (2.0 * n))
}

/// Objective value and first-layer gradient (shape `(m, d)`) of the Phase II objective.
pub fn phase2_value_and_grad(params: &StudentParams, data: &Dataset) -> Result<(f64, Array2<f64>)> {
    check_data(params, data)?;
    check_rescaled(params)?;
    let out = half_mse(params, data.x(), data.y());
    Ok((out.value, out.grad_w))
}

/// First-layer gradient of [`empirical_objective_phase2`]; the second layer is frozen.
pub fn empirical_grad_phase2(params: &StudentParams, data: &Dataset) -> Result<Array2<f64>> {
    phase2_value_and_grad(params, data).map(|(_, g)| g)
}

/// Maps `theta` to `a_k = sign(clip a_k)`, `w_k = |clip a_k| clip(w_k)`.
/// By 1-homogeneity the raw output of the result equals the clipped output
/// of the input. `sign(0)` is taken as `+1`.
pub fn rescale(params: &StudentParams, cfg: ClipConfig) -> StudentParams {
    let clipped = params.clipped(cfg);
    let mut out = clipped.clone();
    for ((ak, mut wk), &abar) in out.a.iter_mut().zip(out.w.rows_mut()).zip(clipped.a.iter()) {
        *ak = if abar >= 0.0 { 1.0 } else { -1.0 };
        wk *= abar.abs();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn cfg2() -> ClipConfig {
        ClipConfig::new(2.0).unwrap()
    }

    #[test]
    fn clip_values() {
        let cfg = cfg2();
        assert_eq!(clip_scalar(0.0, cfg), 0.0);
        assert!(clip_scalar(1e6, cfg) > 2.0 - 1e-9);
        assert!(clip_scalar(1e6, cfg) <= 2.0);
        // 2 tanh(1/4)
        assert!((clip_scalar(1.0, cfg) - 0.489_837_324_807_418_3).abs() < 1e-15);
        assert!((clip_scalar(-1.0, cfg) + 0.489_837_324_807_418_3).abs() < 1e-15);
    }

    #[test]
    fn clip_deriv_values() {
        let cfg = cfg2();
        assert_eq!(clip_deriv(0.0, cfg), 0.0);
        // 1 / cosh^2(1/4)
        assert!((clip_deriv(1.0, cfg) - 0.940_014_848_806_378).abs() < 1e-15);
        assert_eq!(clip_deriv(1e6, cfg), 0.0);
    }

    #[test]
    fn clip_deriv_matches_central_difference() {
        let cfg = cfg2();
        let h = 1e-6;
        for i in -400..=400 {
            let r = i as f64 * 0.025;
            let fd = (clip_scalar(r + h, cfg) - clip_scalar(r - h, cfg)) / (2.0 * h);
            assert!((fd - clip_deriv(r, cfg)).abs() < 1e-6, "r = {r}");
        }
    }

    #[test]
    fn clip_radius_must_exceed_one() {
        assert!(ClipConfig::new(1.0).is_err());
        assert!(ClipConfig::new(f64::NAN).is_err());
        assert!(ClipConfig::new(1.5).is_ok());
    }

    fn unit_net() -> StudentParams {
        TwoLayerNet::new(array![1.0], array![[1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn forward_single_unit() {
        let net = unit_net();
        let e1 = array![1.0, 0.0, 0.0];
        let cfg = cfg2();
        assert_eq!(forward(&net, e1.view(), false, cfg).unwrap(), 1.0);
        assert_eq!(forward(&net, (-&e1).view(), false, cfg).unwrap(), 0.0);
        let c1 = 2.0 * 0.25f64.tanh();
        let clipped = forward(&net, e1.view(), true, cfg).unwrap();
        assert!((clipped - c1 * c1).abs() < 1e-15);
        assert!((clipped - 0.239_940_6).abs() < 1e-7);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let net = unit_net();
        let x = array![1.0, 0.0];
        assert!(matches!(
            forward(&net, x.view(), false, cfg2()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rescale_examples() {
        let cfg = cfg2();
        let out = rescale(&unit_net(), cfg);
        let c1 = 2.0 * 0.25f64.tanh();
        assert_eq!(out.a()[0], 1.0);
        assert!((out.w()[[0, 0]] - c1 * c1).abs() < 1e-15);
        assert_eq!(out.w()[[0, 1]], 0.0);

        let zero_a = TwoLayerNet::new(array![0.0], array![[0.3, -2.0]]).unwrap();
        let out = rescale(&zero_a, cfg);
        assert_eq!(out.a()[0], 1.0);
        assert!(out.w().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_round_trip_layout() {
        let net = TwoLayerNet::new(array![1.0, 2.0], array![[3.0, 4.0], [5.0, 6.0]]).unwrap();
        let flat = net.to_flat();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(TwoLayerNet::from_flat(&flat, 2, 2).unwrap(), net);
    }

    #[test]
    fn teacher_validation() {
        let t = TeacherParams::identity_half_signs(10);
        assert_eq!(t.a().iter().filter(|&&v| v == 1.0).count(), 5);
        assert!((t.condition_number() - 1.0).abs() < 1e-12);
        assert!((t.spectral_ratio() - 1.0).abs() < 1e-12);

        assert!(TeacherParams::new(array![0.5], array![[1.0, 0.0]]).is_err());
        assert!(TeacherParams::new(array![1.0], array![[2.0, 0.0]]).is_err());
        assert!(TeacherParams::new(array![1.0, 1.0], array![[0.5, 0.0], [0.5, 0.0]]).is_err());
        assert!(TeacherParams::new(
            array![1.0, -1.0, 1.0],
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]
        )
        .is_err());
    }

    #[test]
    fn teacher_spectral_statistics() {
        let w = array![[0.8, 0.0, 0.0], [0.0, 0.4, 0.0]];
        let t = TeacherParams::new(array![1.0, -1.0], w).unwrap();
        assert!((t.singular_values()[0] - 0.8).abs() < 1e-12);
        assert!((t.sigma_min() - 0.4).abs() < 1e-12);
        assert!((t.condition_number() - 2.0).abs() < 1e-12);
        assert!((t.spectral_ratio() - 2.0).abs() < 1e-12);
        assert_eq!(t.fingerprint().len(), 16);
    }
}

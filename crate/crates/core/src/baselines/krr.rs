//! Kernel ridge regression `f(x) = y^T (K + lambda I)^{-1} k(x)` and
//! holdout selection of the ridge parameter.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{check_unit, check_unit_rows, cross_gram, gram, KernelSpec};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Diagonal jitter added once when the first factorization fails.
pub const JITTER: f64 = 1e-10;
/// Rows per block when predicting, bounding the cross-Gram buffer.
const PREDICT_BLOCK: usize = 1024;

#[derive(Clone, Debug)]
pub struct KrrModel {
    x_train: Array2<f64>,
    alpha: Array1<f64>,
    spec: KernelSpec,
    lambda: f64,
    relative_residual: f64,
    jittered: bool,
}

impl KrrModel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> ArrayView1<'_, f64> {
        self.alpha.view()
    }

    /// `||(K + lambda I) alpha - y|| / ||y||` of the solve.
    pub fn relative_residual(&self) -> f64 {
        self.relative_residual
    }

    /// Whether the jitter retry was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Predictions at unit rows `x` (not re-validated).
    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.nrows());
        let mut start = 0;
        while start < x.nrows() {
            let end = (start + PREDICT_BLOCK).min(x.nrows());
            let block = x.slice(ndarray::s![start..end, ..]);
            let k = cross_gram(&self.spec, block, self.x_train.view());
            out.slice_mut(ndarray::s![start..end])
                .assign(&k.dot(&self.alpha));
            start = end;
        }
        out
    }
}

/// Solves `(K + lambda I) alpha = y` by Cholesky, retrying once with
/// [`JITTER`] on the diagonal.
pub fn krr_fit(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    spec: &KernelSpec,
    lambda: f64,
) -> Result<KrrModel> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "ridge must be >= 0, got {lambda}"
        )));
    }
    check_unit_rows(x)?;
    let n = x.nrows();
    let k = gram(spec, x);
    let shifted = |extra: f64| {
        let mut buf = k
            .as_standard_layout()
            .into_owned()
            .into_raw_vec_and_offset()
            .0;
        for i in 0..n {
            buf[i * n + i] += lambda + extra;
        }
        buf
    };
    let (chol, jittered) = match Cholesky::factor(shifted(0.0), n) {
        Ok(c) => (c, false),
        Err(_) => match Cholesky::factor(shifted(JITTER), n) {
            Ok(c) => (c, true),
            Err(pivot) => return Err(Error::NotPositiveDefinite { pivot }),
        },
    };
    let y_vec = y.to_vec();
    let alpha = Array1::from(chol.solve(&y_vec));

    let mut resid = k.dot(&alpha);
    resid.scaled_add(lambda, &alpha);
    resid -= &y;
    let y_norm = y.dot(&y).sqrt();
    let relative_residual = if y_norm > 0.0 {
        resid.dot(&resid).sqrt() / y_norm
    } else {
        resid.dot(&resid).sqrt()
    };
    Ok(KrrModel {
        x_train: x.to_owned(),
        alpha,
        spec: *spec,
        lambda,
        relative_residual,
        jittered,
    })
}

pub fn krr_predict(model: &KrrModel, x: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != model.x_train.ncols() {
        return Err(Error::DimensionMismatch {
            expected: model.x_train.ncols(),
            got: x.len(),
        });
    }
    check_unit(x, 0)?;
    let k = model
        .x_train
        .rows()
        .into_iter()
        .map(|xi| model.spec.of_cosine(xi.dot(&x)));
    Ok(k.zip(model.alpha.iter()).map(|(kv, a)| kv * a).sum())
}

/// 13 log-spaced ridge values `1e-6, 10^-5.5, ..., 1`.
pub fn default_ridge_grid() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-6.0 + 0.5 * k as f64)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RidgeSelection {
    pub lambda: f64,
    /// `(lambda, holdout mean squared error)` for every grid value.
    pub holdout_mse: Vec<(f64, f64)>,
}

/// Picks the grid value with the smallest holdout MSE when fitting on the
/// remaining rows. `holdout_frac` of the rows (at least one) are held out.
pub fn select_ridge<R: Rng + ?Sized>(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    spec: &KernelSpec,
    grid: &[f64],
    holdout_frac: f64,
    rng: &mut R,
) -> Result<RidgeSelection> {
    let n = x.nrows();
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty ridge grid".into()));
    }
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "holdout fraction must lie in (0, 1), got {holdout_frac}"
        )));
    }
    let n_hold = ((n as f64 * holdout_frac).round() as usize).max(1);
    if n_hold >= n {
        return Err(Error::InvalidParameter(format!(
            "{n} rows are too few for a holdout split"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (hold, fit) = idx.split_at(n_hold);
    let (mut hold, mut fit) = (hold.to_vec(), fit.to_vec());
    hold.sort_unstable();
    fit.sort_unstable();
    let x_fit = x.select(ndarray::Axis(0), &fit);
    let y_fit = y.select(ndarray::Axis(0), &fit);
    let x_hold = x.select(ndarray::Axis(0), &hold);
    let y_hold = y.select(ndarray::Axis(0), &hold);

    let mut holdout_mse = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let model = krr_fit(x_fit.view(), y_fit.view(), spec, lambda)?;
        let pred = model.predict_batch(x_hold.view());
        let mse = pred
            .iter()
            .zip(y_hold.iter())
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / hold.len() as f64;
        holdout_mse.push((lambda, mse));
    }
    let lambda = holdout_mse
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|p| p.0)
        .expect("non-empty grid");
    Ok(RidgeSelection {
        lambda,
        holdout_mse,
    })
}

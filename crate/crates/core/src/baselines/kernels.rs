//! Dot-product kernels on the unit sphere. Every supported kernel depends on
//! its inputs only through `c = <x, x'>`, which keeps Gram assembly to one
//! matrix product followed by an elementwise map.
//!
//! With `phi = arccos(c)`:
//!
//! ```text
//! arc-cosine-1  k(c) = [sin phi + (pi - phi) c] / (2 pi)
//! rbf           k(c) = exp(-gamma ||x - x'||^2) = exp(-2 gamma (1 - c))
//! ntk-2relu     k(c) = [sin phi + 2 (pi - phi) c] / (2 pi)
//! ```
//!
//! The NTK row is the tangent kernel of `x -> sum_k b_k relu(<u_k, x>)` with
//! both layers trained at a standard Gaussian initialization:
//! `E[relu(u.x) relu(u.x')] + c E[1{u.x > 0} 1{u.x' > 0}]`.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::UNIT_TOL;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    #[serde(rename = "arc-cosine-1")]
    ArcCosine1,
    Rbf {
        gamma: f64,
    },
    #[serde(rename = "ntk-2relu")]
    Ntk2Relu,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { gamma } = *self {
            if !(gamma > 0.0) || !gamma.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "rbf gamma must be > 0, got {gamma}"
                )));
            }
        }
        Ok(())
    }

    /// Kernel value as a function of the cosine between two unit vectors.
    pub fn of_cosine(&self, c: f64) -> f64 {
        let c = c.clamp(-1.0, 1.0);
        match *self {
            KernelSpec::ArcCosine1 => {
                let phi = c.acos();
                (phi.sin() + (PI - phi) * c) / (2.0 * PI)
            }
            KernelSpec::Rbf { gamma } => (-2.0 * gamma * (1.0 - c)).exp(),
            KernelSpec::Ntk2Relu => {
                let phi = c.acos();
                (phi.sin() + 2.0 * (PI - phi) * c) / (2.0 * PI)
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::ArcCosine1 => write!(f, "arc-cosine-1"),
            KernelSpec::Rbf { gamma } => write!(f, "rbf(gamma={gamma})"),
            KernelSpec::Ntk2Relu => write!(f, "ntk-2relu"),
        }
    }
}

pub(crate) fn check_unit(x: ArrayView1<'_, f64>, row: usize) -> Result<()> {
    let norm = x.dot(&x).sqrt();
    if (norm - 1.0).abs() <= UNIT_TOL {
        Ok(())
    } else {
        Err(Error::NonUnitRow { row, norm })
    }
}

pub(crate) fn check_unit_rows(x: ArrayView2<'_, f64>) -> Result<()> {
    x.rows()
        .into_iter()
        .enumerate()
        .try_for_each(|(row, xi)| check_unit(xi, row))
}

pub fn kernel_eval(
    spec: &KernelSpec,
    x: ArrayView1<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    check_unit(x, 0)?;
    check_unit(y, 1)?;
    Ok(spec.of_cosine(x.dot(&y)))
}

/// `K[i, j] = k(a_i, b_j)` for unit rows; inputs are not re-validated.
pub fn cross_gram(
    spec: &KernelSpec,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
) -> Array2<f64> {
    let mut k = a.dot(&b.t());
    k.mapv_inplace(|c| spec.of_cosine(c));
    k
}

/// Symmetric Gram matrix of the rows of `x`.
pub fn gram(spec: &KernelSpec, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut k = cross_gram(spec, x, x);
    let n = k.nrows();
    // Enforce exact symmetry; the product can differ in the last ulp.
    for i in 0..n {
        for j in 0..i {
            let v = k[[i, j]];
            k[[j, i]] = v;
        }
    }
    k
}

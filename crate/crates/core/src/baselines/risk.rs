//! Monte-Carlo excess risk for predictors without a closed form.

use ndarray::{Array1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::sample_sphere;
use crate::error::{Error, Result};
use crate::model::TeacherParams;

const BLOCK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Mean of `(f(x) - f_teacher(x))^2` over `samples` fresh sphere points,
/// with its standard error. `predict` maps a block of unit rows to outputs.
pub fn mc_excess_risk<F, R>(
    predict: F,
    teacher: &TeacherParams,
    samples: usize,
    rng: &mut R,
) -> Result<McEstimate>
where
    F: Fn(ArrayView2<'_, f64>) -> Array1<f64>,
    R: Rng + ?Sized,
{
    if samples < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    let d = teacher.dim();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut left = samples;
    while left > 0 {
        let b = left.min(BLOCK);
        let x = sample_sphere(b, d, rng);
        let pred = predict(x.view());
        if pred.len() != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                got: pred.len(),
            });
        }
        let truth = teacher.net().eval_batch(x.view());
        for (p, t) in pred.iter().zip(truth.iter()) {
            let e = (p - t).powi(2);
            sum += e;
            sum_sq += e * e;
        }
        left -= b;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_err: (var / n).sqrt(),
        samples,
    })
}

//! Least-squares power-law fits `log risk = intercept + slope * log n`.

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `(ln n, ln risk)` pairs.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    pub const MIN_POINTS: usize = 3;

    /// Fits the log-log line through `(n_i, risk_i)`; every value must be positive.
    pub fn fit(ns: &[f64], risks: &[f64]) -> Result<Self> {
        if ns.len() != risks.len() {
            return Err(CliError::Fit(format!(
                "{} sizes but {} risks",
                ns.len(),
                risks.len()
            )));
        }
        if ns.len() < Self::MIN_POINTS {
            return Err(CliError::Fit(format!(
                "need at least {} points, got {}",
                Self::MIN_POINTS,
                ns.len()
            )));
        }
        if let Some((n, r)) = ns
            .iter()
            .zip(risks)
            .find(|(n, r)| !(**n > 0.0) || !(**r > 0.0))
        {
            return Err(CliError::Fit(format!("non-positive point ({n}, {r})")));
        }
        let points: Vec<(f64, f64)> = ns
            .iter()
            .zip(risks)
            .map(|(n, r)| (n.ln(), r.ln()))
            .collect();
        let k = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
        let my = points.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
        if !(sxx > 0.0) {
            return Err(CliError::Fit("sample sizes must not all be equal".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
        if !slope.is_finite() {
            return Err(CliError::Fit("non-finite slope".into()));
        }
        Ok(Self {
            points,
            slope,
            intercept,
            r_squared,
        })
    }
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

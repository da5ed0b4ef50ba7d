use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{stats, LinearFit};

/// How replicate quantiles are turned into an interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    /// `[q_{α/2}, q_{1−α/2}]` of the replicate estimates.
    #[default]
    Percentile,
    /// `[2θ̂ − q_{1−α/2}, 2θ̂ − q_{α/2}]`.
    Basic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: String,
    /// Replicates requested (0 for closed-form intervals).
    pub b: usize,
    /// Replicates on which the estimator failed.
    pub failures: usize,
    pub flags: Vec<String>,
}

impl IntervalEstimate {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Validation(format!(
            "interval level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// Interval bounds from replicate estimates of a quantity estimated by `point`.
pub fn quantile_bounds(
    point: f64,
    replicates: &[f64],
    level: f64,
    kind: IntervalKind,
) -> (f64, f64) {
    let mut s = replicates.to_vec();
    s.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let lo = stats::sorted_quantile(&s, alpha / 2.0);
    let hi = stats::sorted_quantile(&s, 1.0 - alpha / 2.0);
    match kind {
        IntervalKind::Percentile => (lo, hi),
        IntervalKind::Basic => (2.0 * point - hi, 2.0 * point - lo),
    }
}

/// Normal interval from the homoskedastic covariance of coefficient `k`.
pub fn ols_asymptotic_interval(fit: &LinearFit, k: usize, level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    if k >= fit.coefficients.len() {
        return Err(Error::OutOfRange {
            index: k,
            len: fit.coefficients.len(),
        });
    }
    let point = fit.coefficients[k];
    let half = stats::normal_critical(level) * fit.std_error(k);
    Ok(IntervalEstimate {
        point,
        lower: point - half,
        upper: point + half,
        level,
        method: "ols-asymptotic".into(),
        b: 0,
        failures: 0,
        flags: Vec::new(),
    })
}

/// Normal interval for the linear combination `cᵀβ`.
pub fn ols_contrast_interval(fit: &LinearFit, c: &[f64], level: f64) -> Result<IntervalEstimate> {
    check_level(level)?;
    if c.len() != fit.coefficients.len() {
        return Err(Error::LengthMismatch {
            expected: fit.coefficients.len(),
            got: c.len(),
        });
    }
    let cv = nalgebra::DVector::from_column_slice(c);
    let point = fit.coefficients.dot(&cv);
    let var = (cv.transpose() * &fit.covariance * &cv)[(0, 0)];
    let half = stats::normal_critical(level) * var.max(0.0).sqrt();
    Ok(IntervalEstimate {
        point,
        lower: point - half,
        upper: point + half,
        level,
        method: "ols-asymptotic".into(),
        b: 0,
        failures: 0,
        flags: Vec::new(),
    })
}

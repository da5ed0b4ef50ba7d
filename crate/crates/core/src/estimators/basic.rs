use serde::{Deserialize, Serialize};

use super::{Dataset, PointEstimate};
use crate::error::{Error, Result};
use crate::gps::{GpsTable, PROPENSITY_FLOOR};
use crate::numerics::{ols, stats, DesignMatrix, LinearFit};

/// Average outcome over units observed at `level`.
pub fn naive_mean(data: &Dataset, level: f64) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, y) in data.y().iter().enumerate() {
        if data.matches(k, level) {
            sum += y;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoObservations { level });
    }
    Ok(sum / n as f64)
}

/// OLS of `Y` on `(1, E)`.
pub fn naive_ols_fit(data: &Dataset) -> Result<LinearFit> {
    let x = DesignMatrix::from_columns(vec![
        ("intercept".into(), vec![1.0; data.len()]),
        ("exposure".into(), data.e().to_vec()),
    ])?;
    ols(&x, data.y())
}

/// Slope of the regression of `Y` on `(1, E)`.
pub fn naive_ols(data: &Dataset) -> Result<f64> {
    Ok(naive_ols_fit(data)?.coefficients[1])
}

/// `N⁻¹ Σ_i Y_i D_i(e) / r(E_i, W_i)`.
///
/// Scores below the trim floor are floored and reported in the flags.
pub fn ht_estimate(data: &Dataset, level: f64) -> Result<PointEstimate> {
    let mut sum = 0.0;
    let mut floored = 0usize;
    for (k, (&y, &r)) in data.y().iter().zip(data.score()).enumerate() {
        if !data.matches(k, level) {
            continue;
        }
        let r = if r < PROPENSITY_FLOOR {
            floored += 1;
            PROPENSITY_FLOOR
        } else {
            r
        };
        sum += y / r;
    }
    let mut est = PointEstimate::plain(sum / data.len() as f64);
    if floored > 0 {
        est.flags.push(format!(
            "{floored} unit(s) at level {level} had propensity below {PROPENSITY_FLOOR} and were floored"
        ));
    }
    Ok(est)
}

/// HT expressed as a weighted regression, with the fit exposed for inference.
#[derive(Debug, Clone)]
pub struct HtRegression {
    pub levels: Vec<f64>,
    /// `β̂_r = Σ Y_i D_ir / R_i ÷ Σ D_ir / R_i`.
    pub beta: Vec<f64>,
    pub fit: LinearFit,
    pub design: DesignMatrix,
    pub target: Vec<f64>,
}

/// Regresses `Y_i/√R_i` on the columns `D_ir/√R_i`, one per grid level.
pub fn ht_weighted_regression(data: &Dataset, grid: &[f64]) -> Result<HtRegression> {
    let gps = data.gps();
    for &level in grid {
        for &i in data.units() {
            if gps.gps_at(i, level)? <= 0.0 {
                return Err(Error::Validation(format!(
                    "level {level} has zero propensity for unit {i}; HT regression needs positivity"
                )));
            }
        }
    }
    let n = data.len();
    let mut columns = Vec::with_capacity(grid.len());
    for &level in grid {
        let mut col = vec![0.0; n];
        let mut hits = 0usize;
        for (k, c) in col.iter_mut().enumerate() {
            if data.matches(k, level) {
                *c = 1.0 / data.score()[k].max(PROPENSITY_FLOOR).sqrt();
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::NoObservations { level });
        }
        columns.push((format!("level={level}"), col));
    }
    let target: Vec<f64> = data
        .y()
        .iter()
        .zip(data.score())
        .map(|(y, r)| y / r.max(PROPENSITY_FLOOR).sqrt())
        .collect();
    let design = DesignMatrix::from_columns(columns)?;
    let fit = ols(&design, &target)?;
    Ok(HtRegression {
        levels: grid.to_vec(),
        beta: fit.coefficients.iter().copied().collect(),
        fit,
        design,
        target,
    })
}

/// Summary of a unit's exposure distribution used to form strata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Moment {
    Mean,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrataSpec {
    #[serde(default = "default_moment")]
    pub moment: Moment,
    #[serde(default = "default_strata")]
    pub n_strata: usize,
}

fn default_moment() -> Moment {
    Moment::Variance
}

fn default_strata() -> usize {
    10
}

impl Default for StrataSpec {
    fn default() -> Self {
        Self {
            moment: default_moment(),
            n_strata: default_strata(),
        }
    }
}

const STRATUM_TOL: f64 = 1e-12;

/// Quantile-based stratum of every listed unit; units with equal moments
/// always share a stratum, so fewer than `n_strata` strata may result.
pub fn strata_labels(gps: &GpsTable, units: &[usize], spec: &StrataSpec) -> Result<Vec<usize>> {
    if spec.n_strata == 0 {
        return Err(Error::Validation("need at least one stratum".into()));
    }
    let values: Vec<f64> = units
        .iter()
        .map(|&i| {
            let d = gps.distribution(i);
            match spec.moment {
                Moment::Mean => d.mean(),
                Moment::Variance => d.variance(),
            }
        })
        .collect();
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..spec.n_strata)
        .map(|k| stats::sorted_quantile(&sorted, k as f64 / spec.n_strata as f64))
        .collect();
    let raw: Vec<usize> = values
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| c < v - STRATUM_TOL).count())
        .collect();
    // Dense relabelling in increasing order.
    let mut used: Vec<usize> = raw.clone();
    used.sort_unstable();
    used.dedup();
    Ok(raw
        .iter()
        .map(|r| used.binary_search(r).expect("label present"))
        .collect())
}

/// `Σ_s (N_s/N) · mean{Y_i : i ∈ s, E_i ≈ level}`.
pub fn stratified_estimate(data: &Dataset, labels: &[usize], level: f64) -> Result<f64> {
    if labels.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: labels.len(),
        });
    }
    let n_strata = labels.iter().max().map_or(0, |m| m + 1);
    let mut size = vec![0usize; n_strata];
    let mut hits = vec![0usize; n_strata];
    let mut sums = vec![0.0; n_strata];
    for (k, (&s, &y)) in labels.iter().zip(data.y()).enumerate() {
        size[s] += 1;
        if data.matches(k, level) {
            hits[s] += 1;
            sums[s] += y;
        }
    }
    let empty: Vec<usize> = (0..n_strata)
        .filter(|&s| size[s] > 0 && hits[s] == 0)
        .collect();
    if !empty.is_empty() {
        return Err(Error::EmptyStrata {
            level,
            strata: empty,
        });
    }
    let n = data.len() as f64;
    Ok((0..n_strata)
        .filter(|&s| size[s] > 0)
        .map(|s| size[s] as f64 / n * sums[s] / hits[s] as f64)
        .sum())
}

use serde::{Deserialize, Serialize};

use super::basic::{
    ht_estimate, ht_weighted_regression, naive_mean, naive_ols_fit, strata_labels,
    stratified_estimate, Moment, StrataSpec,
};
use super::surface::{
    beta_cell_means, beta_krr_fit, beta_poly_fit, correct_spec_design, dose_response,
    DoseResponseCurve,
};
use super::{Dataset, PointEstimate};
use crate::error::Result;
use crate::gps::Bucketing;
use crate::numerics::{ols, KrrParams};

fn default_lambda() -> f64 {
    KrrParams::default().lambda
}

fn default_moment() -> Moment {
    StrataSpec::default().moment
}

fn default_strata() -> usize {
    StrataSpec::default().n_strata
}

/// A named estimation pipeline, re-run from scratch on every bootstrap replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Estimator {
    NaiveMean,
    NaiveOls,
    #[serde(rename = "ht")]
    HorvitzThompson,
    HtRegression,
    CellMeans,
    Poly,
    Krr {
        #[serde(default)]
        bandwidth: Option<f64>,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Stratified {
        #[serde(default = "default_moment")]
        moment: Moment,
        #[serde(default = "default_strata")]
        n_strata: usize,
    },
    /// OLS on `(1, m_i E_i)`, the true model under heterogeneous effects.
    CorrectSpec,
}

impl Estimator {
    pub fn krr_default() -> Self {
        let p = KrrParams::default();
        Self::Krr {
            bandwidth: p.bandwidth,
            lambda: p.lambda,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::NaiveMean => "naive-mean",
            Self::NaiveOls => "naive-ols",
            Self::HorvitzThompson => "ht",
            Self::HtRegression => "ht-regression",
            Self::CellMeans => "cell-means",
            Self::Poly => "poly",
            Self::Krr { .. } => "krr",
            Self::Stratified { .. } => "stratified",
            Self::CorrectSpec => "correct-spec",
        }
    }

    /// `μ̂` on `grid`, fitting on `fit` and imputing over the units of `target`.
    pub fn curve(
        &self,
        fit: &Dataset,
        target: &Dataset,
        grid: &[f64],
    ) -> Result<DoseResponseCurve> {
        let mut mu = Vec::with_capacity(grid.len());
        let tagged = |mu: Vec<f64>| DoseResponseCurve {
            grid: grid.to_vec(),
            mu,
            estimator: self.name().to_string(),
        };
        match self {
            Self::NaiveMean => {
                for &e in grid {
                    mu.push(naive_mean(fit, e)?);
                }
            }
            Self::NaiveOls => {
                let f = naive_ols_fit(fit)?;
                let (a, b) = (f.coefficients[0], f.coefficients[1]);
                mu.extend(grid.iter().map(|e| a + b * e));
            }
            Self::HorvitzThompson => {
                for &e in grid {
                    mu.push(ht_estimate(fit, e)?.value);
                }
            }
            Self::HtRegression => mu = ht_weighted_regression(fit, grid)?.beta,
            Self::Stratified { moment, n_strata } => {
                let spec = StrataSpec {
                    moment: *moment,
                    n_strata: *n_strata,
                };
                let labels = strata_labels(fit.gps(), fit.units(), &spec)?;
                for &e in grid {
                    mu.push(stratified_estimate(fit, &labels, e)?);
                }
            }
            Self::CorrectSpec => {
                let f = ols(&correct_spec_design(fit)?, fit.y())?;
                let (a, b) = (f.coefficients[0], f.coefficients[1]);
                let m_bar = target.degree().iter().sum::<f64>() / target.len() as f64;
                mu.extend(grid.iter().map(|e| a + b * m_bar * e));
            }
            Self::CellMeans | Self::Poly | Self::Krr { .. } => {
                let surface = match self {
                    Self::CellMeans => {
                        beta_cell_means(fit, &Bucketing::atoms(), &Bucketing::atoms())?
                    }
                    Self::Poly => beta_poly_fit(fit)?,
                    Self::Krr { bandwidth, lambda } => beta_krr_fit(
                        fit,
                        &KrrParams {
                            bandwidth: *bandwidth,
                            lambda: *lambda,
                        },
                    )?,
                    _ => unreachable!(),
                };
                let mut c = dose_response(&surface, target.gps(), target.units(), grid)?;
                c.estimator = self.name().to_string();
                return Ok(c);
            }
        }
        Ok(tagged(mu))
    }

    /// `μ̂(1) − μ̂(0)`, fitting on `fit` and imputing over the units of `target`.
    pub fn ate(&self, fit: &Dataset, target: &Dataset) -> Result<PointEstimate> {
        match self {
            Self::NaiveOls => Ok(PointEstimate::plain(naive_ols_fit(fit)?.coefficients[1])),
            Self::CorrectSpec => {
                let f = ols(&correct_spec_design(fit)?, fit.y())?;
                let m_bar = target.degree().iter().sum::<f64>() / target.len() as f64;
                Ok(PointEstimate::plain(f.coefficients[1] * m_bar))
            }
            Self::HorvitzThompson => {
                let one = ht_estimate(fit, 1.0)?;
                let zero = ht_estimate(fit, 0.0)?;
                let mut flags = one.flags;
                flags.extend(zero.flags);
                Ok(PointEstimate {
                    value: one.value - zero.value,
                    flags,
                })
            }
            _ => {
                let c = self.curve(fit, target, &[0.0, 1.0])?;
                Ok(PointEstimate::plain(c.mu[1] - c.mu[0]))
            }
        }
    }
}

//! Interval estimation: resampling bootstraps, the OLS normal interval, the
//! parametric bootstrap for graph-correlated errors, and the closed-form
//! coefficient covariance under that error model.

mod interval;
mod parametric;
mod resampling;

pub use interval::{
    ols_asymptotic_interval, ols_contrast_interval, quantile_bounds, IntervalEstimate, IntervalKind,
};
pub use parametric::{
    estimate_sigmas, parametric_bootstrap, parametric_variance, ErrorVarianceEstimates,
    ParametricBootstrap, SigmaMethod, WeightSpace,
};
pub use resampling::{
    block_bootstrap, naive_bootstrap, BootstrapOptions, MAX_FAILURE_SHARE, MIN_COMPONENTS,
    MIN_REPLICATES,
};

use crate::error::Result;
use crate::estimators::{correct_spec_design, Dataset, Estimator};
use crate::numerics::DesignMatrix;

/// Regressors `Φ` and the contrast `c` with `ATE = cᵀβ` for estimators that
/// are linear models; `None` otherwise.
pub fn linear_model(
    estimator: &Estimator,
    data: &Dataset,
) -> Option<Result<(DesignMatrix, Vec<f64>)>> {
    match estimator {
        Estimator::NaiveOls => Some(
            DesignMatrix::from_columns(vec![
                ("intercept".into(), vec![1.0; data.len()]),
                ("exposure".into(), data.e().to_vec()),
            ])
            .map(|x| (x, vec![0.0, 1.0])),
        ),
        Estimator::CorrectSpec => {
            let m_bar = data.degree().iter().sum::<f64>() / data.len() as f64;
            Some(correct_spec_design(data).map(|x| (x, vec![0.0, m_bar])))
        }
        _ => None,
    }
}

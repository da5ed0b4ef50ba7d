use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interval::{check_level, quantile_bounds, IntervalEstimate, IntervalKind};
use super::resampling::BootstrapOptions;
use crate::error::{Error, Result};
use crate::numerics::{ColumnSpace, DesignMatrix, OlsSolver};
use crate::rng::{substream, tag};

/// How `σ²_ε` and `σ²_γ` are recovered from the two residual vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMethod {
    /// Matches both residual sums of squares to their exact expectations
    /// under `Y = Φβ + Wγ + ε` (accounts for the degrees of freedom used by
    /// both regressions).
    #[default]
    Moments,
    /// `σ̂²_ε = ε̂ᵀε̂/N`, `σ̂²_γ = (ûᵀû − Nσ̂²_ε)/tr(WWᵀ)`: consistent, but
    /// biased when `rank(W)` is not small relative to `N`.
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVarianceEstimates {
    pub sigma2_eps: f64,
    pub sigma2_gamma: f64,
    /// `σ̂²_γ` before clipping at zero.
    pub raw_sigma2_gamma: f64,
    pub clipped: bool,
    pub method: SigmaMethod,
}

/// Weight matrix with its column-space factorization, built once per graph.
#[derive(Debug, Clone)]
pub struct WeightSpace {
    w: DMatrix<f64>,
    space: ColumnSpace,
    frobenius_sq: f64,
}

impl WeightSpace {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        let frobenius_sq = w.norm_squared();
        if frobenius_sq == 0.0 {
            return Err(Error::Validation(
                "tr(WWᵀ) = 0: the graph has no weight".into(),
            ));
        }
        let space = ColumnSpace::new(&w);
        Ok(Self {
            w,
            space,
            frobenius_sq,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn rank(&self) -> usize {
        self.space.rank()
    }
}

fn check_rows(y: &[f64], phi: &DesignMatrix, w: &WeightSpace) -> Result<()> {
    for len in [phi.nrows(), w.w.nrows()] {
        if len != y.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: len,
            });
        }
    }
    if y.len() <= phi.ncols() {
        return Err(Error::Validation(
            "need more observations than regressors".into(),
        ));
    }
    Ok(())
}

fn sigmas_with(
    solver: &OlsSolver,
    y: &DVector<f64>,
    w: &WeightSpace,
    method: SigmaMethod,
) -> ErrorVarianceEstimates {
    let n = y.len() as f64;
    let k = solver.ncols() as f64;
    let u = solver.residuals(y);
    let eps = w.space.residuals(&u);
    let (uu, ee) = (u.norm_squared(), eps.norm_squared());
    let (s_eps, s_gamma) = match method {
        SigmaMethod::Asymptotic => {
            let s_eps = ee / n;
            (s_eps, (uu - n * s_eps) / w.frobenius_sq)
        }
        SigmaMethod::Moments => {
            let q = solver.basis();
            let mw = &w.w - q * q.tr_mul(&w.w);
            let a22 = mw.norm_squared();
            let a12 = w.space.residual_matrix(&mw).norm_squared();
            let overlap = w.space.basis().tr_mul(q).norm_squared();
            let a11 = (n - k) - w.space.rank() as f64 + overlap;
            let a21 = n - k;
            let det = a11 * a22 - a12 * a21;
            if det.abs() <= 1e-12 * (a11 * a22).abs().max(f64::MIN_POSITIVE) {
                // γ is not identified separately from ε.
                (uu / (n - k), 0.0)
            } else {
                ((ee * a22 - a12 * uu) / det, (a11 * uu - a21 * ee) / det)
            }
        }
    };
    let clipped = s_gamma < 0.0;
    ErrorVarianceEstimates {
        sigma2_eps: s_eps.max(0.0),
        sigma2_gamma: s_gamma.max(0.0),
        raw_sigma2_gamma: s_gamma,
        clipped,
        method,
    }
}

/// Regress `Y` on `Φ` (residuals `û`), then `û` on `W` (residuals `ε̂`), and
/// convert the two residual sums of squares into variance estimates.
pub fn estimate_sigmas(
    y: &[f64],
    phi: &DesignMatrix,
    w: &WeightSpace,
    method: SigmaMethod,
) -> Result<ErrorVarianceEstimates> {
    check_rows(y, phi, w)?;
    let solver = OlsSolver::new(phi)?;
    Ok(sigmas_with(
        &solver,
        &DVector::from_column_slice(y),
        w,
        method,
    ))
}

/// Replicate coefficient vectors from the fitted error model.
#[derive(Debug, Clone)]
pub struct ParametricBootstrap {
    pub beta_hat: DVector<f64>,
    pub sigmas: ErrorVarianceEstimates,
    pub replicates: Vec<DVector<f64>>,
    pub labels: Vec<String>,
}

impl ParametricBootstrap {
    /// Interval for `cᵀβ` from the replicate distribution of `cᵀ(β̂ᵇ − β̂)`.
    pub fn contrast_interval(
        &self,
        c: &[f64],
        level: f64,
        kind: IntervalKind,
    ) -> Result<IntervalEstimate> {
        check_level(level)?;
        if c.len() != self.beta_hat.len() {
            return Err(Error::LengthMismatch {
                expected: self.beta_hat.len(),
                got: c.len(),
            });
        }
        let dot = |b: &DVector<f64>| b.iter().zip(c).map(|(x, w)| x * w).sum::<f64>();
        let point = dot(&self.beta_hat);
        // β̂ + (β̂ᵇ − β̂) is just β̂ᵇ.
        let values: Vec<f64> = self.replicates.iter().map(dot).collect();
        let (lower, upper) = quantile_bounds(point, &values, level, kind);
        let mut flags = Vec::new();
        if self.sigmas.clipped {
            flags.push(format!(
                "negative sigma2_gamma estimate {} clipped to 0",
                self.sigmas.raw_sigma2_gamma
            ));
        }
        Ok(IntervalEstimate {
            point,
            lower,
            upper,
            level,
            method: "parametric-bootstrap".into(),
            b: self.replicates.len(),
            failures: 0,
            flags,
        })
    }

    pub fn coefficient_interval(
        &self,
        k: usize,
        level: f64,
        kind: IntervalKind,
    ) -> Result<IntervalEstimate> {
        let mut c = vec![0.0; self.beta_hat.len()];
        *c.get_mut(k).ok_or(Error::OutOfRange {
            index: k,
            len: self.beta_hat.len(),
        })? = 1.0;
        self.contrast_interval(&c, level, kind)
    }
}

/// Simulates `Yᵇ = Φβ̂ + Wγᵇ + εᵇ` with `γᵇ ~ N(0, σ̂²_γ I)`,
/// `εᵇ ~ N(0, σ̂²_ε I)` and refits `β̂ᵇ` on each.
pub fn parametric_bootstrap(
    y: &[f64],
    phi: &DesignMatrix,
    w: &WeightSpace,
    opts: &BootstrapOptions,
    method: SigmaMethod,
    seed: u64,
) -> Result<ParametricBootstrap> {
    opts.validate(1)?;
    check_rows(y, phi, w)?;
    let solver = OlsSolver::new(phi)?;
    let yv = DVector::from_column_slice(y);
    let beta_hat = solver.coefficients(&yv);
    let sigmas = sigmas_with(&solver, &yv, w, method);
    let fitted = phi.matrix() * &beta_hat;
    let (sd_eps, sd_gamma) = (sigmas.sigma2_eps.sqrt(), sigmas.sigma2_gamma.sqrt());
    let m = w.w.ncols();
    let replicates = (0..opts.b as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(seed, &[tag::PARAMETRIC, rep]);
            let gamma = DVector::from_fn(m, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd_gamma * z
            });
            let mut yb = &fitted + &w.w * gamma;
            for v in yb.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += sd_eps * z;
            }
            solver.coefficients(&yb)
        })
        .collect();
    Ok(ParametricBootstrap {
        beta_hat,
        sigmas,
        replicates,
        labels: phi.labels().to_vec(),
    })
}

/// `σ²_ε Q⁻¹ + σ²_γ Q⁻¹ Q_{ΦW} Q⁻¹` with `Q = ΦᵀΦ/N`, `Q_{ΦW} = ΦᵀWWᵀΦ/N`:
/// the covariance of `√N(β̂ − β)` given `(E, W)`.
pub fn parametric_variance(
    phi: &DesignMatrix,
    w: &DMatrix<f64>,
    sigma2_eps: f64,
    sigma2_gamma: f64,
) -> Result<DMatrix<f64>> {
    if w.nrows() != phi.nrows() {
        return Err(Error::LengthMismatch {
            expected: phi.nrows(),
            got: w.nrows(),
        });
    }
    let n = phi.nrows() as f64;
    let x = phi.matrix();
    let q = x.tr_mul(x) / n;
    let q_inv = q
        .cholesky()
        .ok_or_else(|| Error::Singular("Q = ΦᵀΦ/N is not invertible".into()))?
        .inverse();
    let wt_phi = w.tr_mul(x);
    let q_phi_w = wt_phi.tr_mul(&wt_phi) / n;
    Ok(&q_inv * sigma2_eps + &q_inv * q_phi_w * &q_inv * sigma2_gamma)
}

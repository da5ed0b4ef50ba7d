use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::stats::median;

/// Kernel ridge hyperparameters; a missing bandwidth uses the median
/// pairwise distance between distinct standardized inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrrParams {
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
}

fn default_lambda() -> f64 {
    1e-3
}

impl Default for KrrParams {
    fn default() -> Self {
        Self {
            bandwidth: None,
            lambda: default_lambda(),
        }
    }
}

/// Above this many distinct inputs the bandwidth heuristic subsamples.
const MEDIAN_SAMPLE: usize = 1000;

/// Fitted kernel ridge regressor with an RBF kernel over standardized
/// two-dimensional inputs.
#[derive(Debug, Clone)]
pub struct KernelFit {
    centers: Vec<[f64; 2]>,
    alpha: Vec<f64>,
    shift: [f64; 2],
    scale: [f64; 2],
    y_mean: f64,
    bandwidth: f64,
    lambda: f64,
}

impl KernelFit {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of distinct training inputs.
    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn predict(&self, x: (f64, f64)) -> f64 {
        let z = self.standardize(x);
        let g = -0.5 / (self.bandwidth * self.bandwidth);
        let s: f64 = self
            .centers
            .iter()
            .zip(&self.alpha)
            .map(|(c, a)| a * (g * dist2(c, &z)).exp())
            .sum();
        self.y_mean + s
    }

    fn standardize(&self, x: (f64, f64)) -> [f64; 2] {
        [
            (x.0 - self.shift[0]) / self.scale[0],
            (x.1 - self.shift[1]) / self.scale[1],
        ]
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (d0, d1) = (a[0] - b[0], a[1] - b[1]);
    d0 * d0 + d1 * d1
}

/// Fits `min Σ (y_i − f(x_i))² + λ‖f‖²` over the RKHS of the RBF kernel.
///
/// Identical inputs are pooled: with distinct points `u`, counts `n_u` and
/// mean targets `ȳ_u`, the solution solves `(K_u + λ diag(1/n_u)) α = ȳ_u`,
/// which is the same estimator as the full `N × N` system.
pub fn krr_fit(inputs: &[(f64, f64)], y: &[f64], params: &KrrParams) -> Result<KernelFit> {
    if inputs.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: inputs.len(),
            got: y.len(),
        });
    }
    if inputs.is_empty() {
        return Err(Error::Validation(
            "kernel ridge needs at least one observation".into(),
        ));
    }
    if !(params.lambda.is_finite() && params.lambda > 0.0) {
        return Err(Error::Validation(format!(
            "ridge parameter must be positive, got {}",
            params.lambda
        )));
    }
    if let Some(h) = params.bandwidth {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Validation(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
    }
    if inputs.iter().any(|x| !x.0.is_finite() || !x.1.is_finite())
        || y.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Validation(
            "kernel ridge inputs must be finite".into(),
        ));
    }

    let n = y.len() as f64;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut shift = [0.0; 2];
    let mut scale = [1.0; 2];
    for d in 0..2 {
        let col = inputs.iter().map(|x| if d == 0 { x.0 } else { x.1 });
        let m = col.clone().sum::<f64>() / n;
        let v = col.map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        shift[d] = m;
        if v > 0.0 {
            scale[d] = v.sqrt();
        }
    }

    // Pool identical inputs, keeping first-appearance order.
    let mut slot: HashMap<(u64, u64), usize> = HashMap::new();
    let mut raw: Vec<(f64, f64)> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for (x, &t) in inputs.iter().zip(y) {
        let key = (x.0.to_bits(), x.1.to_bits());
        let u = *slot.entry(key).or_insert_with(|| {
            raw.push(*x);
            sums.push(0.0);
            counts.push(0.0);
            raw.len() - 1
        });
        sums[u] += t - y_mean;
        counts[u] += 1.0;
    }
    let mut fit = KernelFit {
        centers: Vec::new(),
        alpha: Vec::new(),
        shift,
        scale,
        y_mean,
        bandwidth: 1.0,
        lambda: params.lambda,
    };
    let centers: Vec<[f64; 2]> = raw.iter().map(|&x| fit.standardize(x)).collect();
    let u = centers.len();

    fit.bandwidth = match params.bandwidth {
        Some(h) => h,
        None => {
            let step = u.div_ceil(MEDIAN_SAMPLE).max(1);
            let sample: Vec<&[f64; 2]> = centers.iter().step_by(step).collect();
            let mut d = Vec::with_capacity(sample.len() * sample.len() / 2);
            for a in 0..sample.len() {
                for b in a + 1..sample.len() {
                    d.push(dist2(sample[a], sample[b]).sqrt());
                }
            }
            match median(&d) {
                Some(h) if h > 0.0 => h,
                _ => 1.0,
            }
        }
    };

    let g = -0.5 / (fit.bandwidth * fit.bandwidth);
    let mut k = DMatrix::from_fn(u, u, |a, b| (g * dist2(&centers[a], &centers[b])).exp());
    for a in 0..u {
        k[(a, a)] += params.lambda / counts[a];
    }
    let target = DVector::from_iterator(u, sums.iter().zip(&counts).map(|(s, c)| s / c));
    let chol = k.cholesky().ok_or_else(|| {
        Error::Singular(format!(
            "kernel system is not positive definite at lambda = {}; increase lambda",
            params.lambda
        ))
    })?;
    let alpha = chol.solve(&target);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Singular(format!(
            "kernel solve produced non-finite weights at lambda = {}; increase lambda",
            params.lambda
        )));
    }
    fit.centers = centers;
    fit.alpha = alpha.iter().copied().collect();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets() {
        let x: Vec<(f64, f64)> = (0..20)
            .map(|i| (i as f64 / 19.0, (i % 4) as f64 / 4.0))
            .collect();
        let y = vec![3.5; 20];
        let params = KrrParams {
            bandwidth: None,
            lambda: 1e-6,
        };
        let fit = krr_fit(&x, &y, &params).unwrap();
        for p in [(0.0, 0.0), (0.5, 0.3), (2.0, -1.0)] {
            assert!((fit.predict(p) - 3.5).abs() < 1e-6);
        }
    }

    #[test]
    fn conflicting_duplicates_average() {
        let x = vec![(0.0, 0.0), (0.0, 0.0), (1.0, 1.0)];
        let y = vec![0.0, 2.0, 5.0];
        let fit = krr_fit(&x, &y, &KrrParams::default()).unwrap();
        let p = fit.predict((0.0, 0.0));
        assert!(p > 0.0 && p < 2.0, "{p}");
        assert_eq!(fit.n_centers(), 2);
    }

    #[test]
    fn pooling_matches_full_system() {
        // Full N×N solve with the same standardization and bandwidth.
        let x = vec![
            (0.0, 0.5),
            (0.5, 0.25),
            (0.0, 0.5),
            (1.0, 0.25),
            (0.5, 0.25),
            (1.0, 0.5),
        ];
        let y = vec![0.1, 0.7, 0.3, 1.2, 0.4, 0.9];
        let params = KrrParams {
            bandwidth: Some(0.8),
            lambda: 0.05,
        };
        let fit = krr_fit(&x, &y, &params).unwrap();
        let z: Vec<[f64; 2]> = x.iter().map(|&p| fit.standardize(p)).collect();
        let ybar = y.iter().sum::<f64>() / 6.0;
        let g = -0.5 / 0.64;
        let k = DMatrix::from_fn(6, 6, |a, b| (g * dist2(&z[a], &z[b])).exp())
            + DMatrix::identity(6, 6) * 0.05;
        let a = k
            .lu()
            .solve(&DVector::from_iterator(6, y.iter().map(|v| v - ybar)))
            .unwrap();
        for probe in [(0.2, 0.3), (1.0, 0.5), (0.5, 0.25)] {
            let zp = fit.standardize(probe);
            let full: f64 = ybar
                + (0..6)
                    .map(|i| a[i] * (g * dist2(&z[i], &zp)).exp())
                    .sum::<f64>();
            assert!((fit.predict(probe) - full).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let x = vec![(0.0, 0.0)];
        assert!(krr_fit(
            &x,
            &[1.0],
            &KrrParams {
                bandwidth: None,
                lambda: 0.0
            }
        )
        .is_err());
        assert!(krr_fit(
            &x,
            &[1.0],
            &KrrParams {
                bandwidth: Some(-1.0),
                lambda: 1.0
            }
        )
        .is_err());
        assert!(krr_fit(&x, &[1.0, 2.0], &KrrParams::default()).is_err());
    }
}

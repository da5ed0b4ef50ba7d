use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value threshold below which a design is rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Regressor matrix with column labels (used in rank diagnostics).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::LengthMismatch {
                expected: x.ncols(),
                got: labels.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "design matrix has non-finite entries".into(),
            ));
        }
        Ok(Self { x, labels })
    }

    /// Builds from named columns of equal length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.1.len());
        if let Some(bad) = columns.iter().find(|c| c.1.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: bad.1.len(),
            });
        }
        let k = columns.len();
        let mut x = DMatrix::zeros(n, k);
        let mut labels = Vec::with_capacity(k);
        for (c, (name, values)) in columns.into_iter().enumerate() {
            x.set_column(c, &DVector::from_vec(values));
            labels.push(name);
        }
        Self::new(x, labels)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Rows in the given order (with repetition).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            labels: self.labels.clone(),
        }
    }
}

/// Least-squares fit with homoskedastic coefficient covariance.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `σ̂² (XᵀX)⁻¹` with `σ̂² = RSS / (N − K)`.
    pub covariance: DMatrix<f64>,
    pub sigma2: f64,
    pub labels: Vec<String>,
    pub n_obs: usize,
}

impl LinearFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == name)
            .map(|k| self.coefficients[k])
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.covariance[(k, k)].max(0.0).sqrt()
    }
}

/// Thin QR factorization of a full-rank design, reusable across many targets.
#[derive(Debug, Clone)]
pub struct OlsSolver {
    q: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    labels: Vec<String>,
}

impl OlsSolver {
    /// Factors `X = QR` and checks the rank through the singular values of `R`.
    pub fn new(x: &DesignMatrix) -> Result<Self> {
        let (n, k) = (x.nrows(), x.ncols());
        if k == 0 {
            return Err(Error::Validation("design matrix has no columns".into()));
        }
        if n < k {
            return Err(Error::Validation(format!(
                "need at least as many observations as columns (N = {n}, K = {k})"
            )));
        }
        let qr = x.x.clone().qr();
        let r = qr.r();
        let svd = r.clone().svd(false, true);
        let smax = svd.singular_values.max();
        let tol = RANK_TOL * smax;
        if smax == 0.0 || svd.singular_values.iter().any(|&s| s <= tol) {
            return Err(Error::RankDeficient {
                columns: collinear_columns(&svd, tol, &x.labels),
            });
        }
        let r_inv = r
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("triangular factor is not invertible".into()))?;
        Ok(Self {
            q: qr.q(),
            r_inv,
            labels: x.labels.clone(),
        })
    }

    pub fn ncols(&self) -> usize {
        self.r_inv.nrows()
    }

    /// `β̂ = R⁻¹ Qᵀ y`.
    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.r_inv * (self.q.tr_mul(y))
    }

    /// Component of `y` orthogonal to the column space.
    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.q * self.q.tr_mul(y)
    }

    /// `(XᵀX)⁻¹ = R⁻¹ R⁻ᵀ`.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        &self.r_inv * self.r_inv.transpose()
    }

    /// Orthonormal basis of the column space.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn fit(&self, y: &DVector<f64>) -> LinearFit {
        let n = y.len();
        let k = self.ncols();
        let qty = self.q.tr_mul(y);
        let coefficients = &self.r_inv * &qty;
        let residuals = y - &self.q * qty;
        let rss = residuals.norm_squared();
        let sigma2 = if n > k { rss / (n - k) as f64 } else { 0.0 };
        let covariance = self.xtx_inverse() * sigma2;
        LinearFit {
            coefficients,
            residuals,
            covariance,
            sigma2,
            labels: self.labels.clone(),
            n_obs: n,
        }
    }
}

fn collinear_columns(
    svd: &nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    tol: f64,
    labels: &[String],
) -> Vec<String> {
    let Some(v_t) = svd.v_t.as_ref() else {
        return labels.to_vec();
    };
    let mut involved = vec![false; labels.len()];
    for (s, &sv) in svd.singular_values.iter().enumerate() {
        if sv > tol {
            continue;
        }
        let row = v_t.row(s);
        let peak = row.amax();
        for (c, flag) in involved.iter_mut().enumerate() {
            if row[c].abs() > 1e-6 * peak.max(f64::MIN_POSITIVE) {
                *flag = true;
            }
        }
    }
    labels
        .iter()
        .zip(involved)
        .filter(|(_, f)| *f)
        .map(|(l, _)| l.clone())
        .collect()
}

/// Ordinary least squares via Householder QR.
pub fn ols(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("response has non-finite entries".into()));
    }
    Ok(OlsSolver::new(x)?.fit(&DVector::from_column_slice(y)))
}

/// Orthogonal projector onto the column space of a possibly rank-deficient matrix.
#[derive(Debug, Clone)]
pub struct ColumnSpace {
    basis: DMatrix<f64>,
}

impl ColumnSpace {
    /// Basis from the left singular vectors above `RANK_TOL · σ_max`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let svd = a.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let u = svd.u.expect("left singular vectors requested");
        let keep: Vec<usize> = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| smax > 0.0 && s > RANK_TOL * smax)
            .map(|(c, _)| c)
            .collect();
        Self {
            basis: u.select_columns(&keep),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn residuals(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.basis * self.basis.tr_mul(y)
    }

    /// `(I − P) A` for every column of `A`.
    pub fn residual_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        a - &self.basis * self.basis.tr_mul(a)
    }
}

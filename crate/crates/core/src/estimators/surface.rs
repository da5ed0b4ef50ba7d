use std::collections::HashMap;

use super::Dataset;
use crate::error::{Error, Result};
use crate::gps::{Bucketing, GpsTable, ATOM_TOL};
use crate::numerics::{krr_fit, ols, DesignMatrix, KernelFit, KrrParams};

/// Column labels of the quadratic outcome model in `(e, r)`.
pub const POLY_TERMS: [&str; 6] = ["intercept", "e", "e^2", "r", "r^2", "e*r"];

fn poly_row(e: f64, r: f64) -> [f64; 6] {
    [1.0, e, e * e, r, r * r, e * r]
}

#[derive(Debug, Clone)]
struct Cell {
    e: f64,
    r: f64,
    sum: f64,
    n: usize,
}

/// Mean outcome per (exposure bucket, score bucket).
#[derive(Debug, Clone)]
pub struct CellTable {
    exposure: Bucketing,
    score: Bucketing,
    cells: Vec<Cell>,
}

impl CellTable {
    fn find(&self, e: f64, r: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| self.exposure.same_bucket(c.e, e) && self.score.same_bucket(c.r, r))
    }

    /// Populated cells as `(e, r, mean, count)`, `e` and `r` being the first
    /// values seen in each cell.
    pub fn cells(&self) -> Vec<(f64, f64, f64, usize)> {
        self.cells
            .iter()
            .map(|c| (c.e, c.r, c.sum / c.n as f64, c.n))
            .collect()
    }
}

/// Fitted `β(e, r) = E[Y | E = e, r(E, W) = r]`.
#[derive(Debug, Clone)]
pub enum BetaSurface {
    Cells(CellTable),
    Poly { coefficients: [f64; 6] },
    Kernel(KernelFit),
}

impl BetaSurface {
    /// `None` marks an empty cell of a cell table.
    pub fn eval(&self, e: f64, r: f64) -> Option<f64> {
        match self {
            Self::Cells(t) => t.find(e, r).map(|c| c.sum / c.n as f64),
            Self::Poly { coefficients } => Some(
                poly_row(e, r)
                    .iter()
                    .zip(coefficients)
                    .map(|(x, b)| x * b)
                    .sum(),
            ),
            Self::Kernel(k) => Some(k.predict((e, r))),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Cells(_) => "cell-means",
            Self::Poly { .. } => "poly",
            Self::Kernel(_) => "krr",
        }
    }
}

/// Cell means of `Y` over observed `(E_i, R_i)`.
pub fn beta_cell_means(
    data: &Dataset,
    exposure: &Bucketing,
    score: &Bucketing,
) -> Result<BetaSurface> {
    exposure.validate()?;
    score.validate()?;
    let mut table = CellTable {
        exposure: exposure.clone(),
        score: score.clone(),
        cells: Vec::new(),
    };
    for ((&y, &e), &r) in data.y().iter().zip(data.e()).zip(data.score()) {
        let pos = table
            .cells
            .iter()
            .position(|c| exposure.same_bucket(c.e, e) && score.same_bucket(c.r, r));
        match pos {
            Some(p) => {
                table.cells[p].sum += y;
                table.cells[p].n += 1;
            }
            None => table.cells.push(Cell { e, r, sum: y, n: 1 }),
        }
    }
    Ok(BetaSurface::Cells(table))
}

/// OLS of `Y` on `(1, E, E², R, R², E·R)`.
pub fn beta_poly_fit(data: &Dataset) -> Result<BetaSurface> {
    if data.len() < POLY_TERMS.len() {
        return Err(Error::Validation(format!(
            "polynomial outcome model needs at least {} observations, got {}",
            POLY_TERMS.len(),
            data.len()
        )));
    }
    let rows: Vec<[f64; 6]> = data
        .e()
        .iter()
        .zip(data.score())
        .map(|(&e, &r)| poly_row(e, r))
        .collect();
    let columns = POLY_TERMS
        .iter()
        .enumerate()
        .map(|(c, name)| (name.to_string(), rows.iter().map(|row| row[c]).collect()))
        .collect();
    let fit = ols(&DesignMatrix::from_columns(columns)?, data.y())?;
    let mut coefficients = [0.0; 6];
    coefficients.copy_from_slice(fit.coefficients.as_slice());
    Ok(BetaSurface::Poly { coefficients })
}

/// Kernel ridge fit of `Y` on `(E, R)`.
pub fn beta_krr_fit(data: &Dataset, params: &KrrParams) -> Result<BetaSurface> {
    let inputs: Vec<(f64, f64)> = data
        .e()
        .iter()
        .copied()
        .zip(data.score().iter().copied())
        .collect();
    Ok(BetaSurface::Kernel(krr_fit(&inputs, data.y(), params)?))
}

/// `(1, m_i · E_i)`: the true regressors of the heterogeneous-effect model.
pub fn correct_spec_design(data: &Dataset) -> Result<DesignMatrix> {
    DesignMatrix::from_columns(vec![
        ("intercept".into(), vec![1.0; data.len()]),
        (
            "degree*exposure".into(),
            data.degree()
                .iter()
                .zip(data.e())
                .map(|(m, e)| m * e)
                .collect(),
        ),
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoseResponseCurve {
    pub grid: Vec<f64>,
    pub mu: Vec<f64>,
    pub estimator: String,
}

impl DoseResponseCurve {
    pub fn at(&self, level: f64) -> Option<f64> {
        self.grid
            .iter()
            .position(|g| (g - level).abs() <= ATOM_TOL)
            .map(|k| self.mu[k])
    }
}

fn check_grid(grid: &[f64], hi: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation("dose-response grid is empty".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(
            "dose-response grid must be strictly increasing".into(),
        ));
    }
    let top = hi.max(1.0);
    if grid[0] < -ATOM_TOL || grid[grid.len() - 1] > top + ATOM_TOL {
        return Err(Error::Validation(format!(
            "dose-response grid must lie within [0, {top}]"
        )));
    }
    Ok(())
}

/// `μ̂(e) = |T|⁻¹ Σ_{i∈T} β̂(e, r(e, W_i))` over the target units `T`.
///
/// The surface is evaluated once per distinct imputed score.
pub fn dose_response(
    surface: &BetaSurface,
    gps: &GpsTable,
    target: &[usize],
    grid: &[f64],
) -> Result<DoseResponseCurve> {
    check_grid(grid, gps.range_hi())?;
    if target.is_empty() {
        return Err(Error::Validation("empty target population".into()));
    }
    let mut mu = Vec::with_capacity(grid.len());
    let mut holes: Vec<(f64, f64)> = Vec::new();
    for &e in grid {
        let mut cache: HashMap<u64, Option<f64>> = HashMap::new();
        let mut sum = 0.0;
        for &i in target {
            let r = gps.gps_at(i, e)?;
            let v = *cache
                .entry(r.to_bits())
                .or_insert_with(|| surface.eval(e, r));
            match v {
                Some(v) => sum += v,
                None => {
                    if !holes.contains(&(e, r)) {
                        holes.push((e, r));
                    }
                }
            }
        }
        mu.push(sum / target.len() as f64);
    }
    if !holes.is_empty() {
        return Err(Error::MissingCells { holes });
    }
    Ok(DoseResponseCurve {
        grid: grid.to_vec(),
        mu,
        estimator: surface.kind().to_string(),
    })
}

/// `μ̂(1) − μ̂(0)`.
pub fn ate(curve: &DoseResponseCurve) -> Result<f64> {
    match (curve.at(1.0), curve.at(0.0)) {
        (Some(one), Some(zero)) => Ok(one - zero),
        _ => Err(Error::Validation(
            "dose-response grid must contain the levels 0 and 1".into(),
        )),
    }
}

/// Replaces the curve by its least-squares line over the grid.
pub fn smooth_linear(curve: &DoseResponseCurve) -> Result<DoseResponseCurve> {
    let x = DesignMatrix::from_columns(vec![
        ("intercept".into(), vec![1.0; curve.grid.len()]),
        ("e".into(), curve.grid.clone()),
    ])?;
    let fit = ols(&x, &curve.mu)?;
    let (a, b) = (fit.coefficients[0], fit.coefficients[1]);
    Ok(DoseResponseCurve {
        grid: curve.grid.clone(),
        mu: curve.grid.iter().map(|e| a + b * e).collect(),
        estimator: format!("{}+linear", curve.estimator),
    })
}

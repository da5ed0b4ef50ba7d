//! Point estimators of the exposure-response curve `μ(e)` and of the effect
//! `μ(1) − μ(0)`.

mod basic;
mod pipeline;
mod surface;
mod table;

pub use basic::{
    ht_estimate, ht_weighted_regression, naive_mean, naive_ols, naive_ols_fit, strata_labels,
    stratified_estimate, HtRegression, Moment, StrataSpec,
};
pub use pipeline::Estimator;
pub use surface::{
    ate, beta_cell_means, beta_krr_fit, beta_poly_fit, correct_spec_design, dose_response,
    smooth_linear, BetaSurface, CellTable, DoseResponseCurve, POLY_TERMS,
};
pub use table::{write_results_csv, write_results_json, ResultRow};

use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::gps::GpsTable;
use crate::graph::BipartiteGraph;

/// Default dose-response grid `{0, 0.1, …, 1}`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

/// Observed triples `(Y_i, E_i, W_i)`, the last one carried as the unit's
/// row in a shared GPS table.
///
/// Resampling copies units (with their original scores); it never
/// recomputes the table.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    e: Vec<f64>,
    units: Vec<usize>,
    score: Vec<f64>,
    degree: Vec<f64>,
    gps: Arc<GpsTable>,
}

impl Dataset {
    /// Builds the dataset, dropping isolated outcome units (constant zero
    /// exposure, no positivity at e = 1) with a warning.
    pub fn new(
        graph: &BipartiteGraph,
        gps: Arc<GpsTable>,
        y: Vec<f64>,
        e: Vec<f64>,
    ) -> Result<Self> {
        let n = graph.n_outcome();
        for len in [y.len(), e.len(), gps.n_units()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        if y.iter().chain(&e).any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "outcomes and exposures must be finite".into(),
            ));
        }
        let isolated = graph.isolated_units();
        if !isolated.is_empty() {
            warn!(
                "excluding {} isolated outcome unit(s) from estimation (no positivity at e = 1)",
                isolated.len()
            );
        }
        let keep: Vec<usize> = (0..n).filter(|&i| !graph.is_isolated(i)).collect();
        if keep.is_empty() {
            return Err(Error::Validation("no outcome unit has an edge".into()));
        }
        let mut score = Vec::with_capacity(keep.len());
        for &i in &keep {
            score.push(gps.gps_at(i, e[i])?);
        }
        Ok(Self {
            y: keep.iter().map(|&i| y[i]).collect(),
            e: keep.iter().map(|&i| e[i]).collect(),
            degree: keep.iter().map(|&i| graph.degree(i) as f64).collect(),
            units: keep,
            score,
            gps,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// Observed scores `R_i = r(E_i, W_i)`.
    pub fn score(&self) -> &[f64] {
        &self.score
    }

    /// Number of neighbors `m_i` of each unit.
    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Index of each observation in the GPS table (the original unit).
    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn gps(&self) -> &GpsTable {
        &self.gps
    }

    pub fn gps_arc(&self) -> &Arc<GpsTable> {
        &self.gps
    }

    /// `D_i(level)`: whether the observed exposure matches `level`.
    pub fn matches(&self, k: usize, level: f64) -> bool {
        self.gps.matches(level, self.e[k])
    }

    /// Observations at positions `idx` (repetition allowed).
    pub fn resample(&self, idx: &[usize]) -> Self {
        Self {
            y: idx.iter().map(|&k| self.y[k]).collect(),
            e: idx.iter().map(|&k| self.e[k]).collect(),
            units: idx.iter().map(|&k| self.units[k]).collect(),
            score: idx.iter().map(|&k| self.score[k]).collect(),
            degree: idx.iter().map(|&k| self.degree[k]).collect(),
            gps: Arc::clone(&self.gps),
        }
    }

    /// Same units and exposures with a new outcome vector.
    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: y.len(),
            });
        }
        Ok(Self { y, ..self.clone() })
    }
}

/// A point estimate together with any diagnostic flags raised on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub flags: Vec<String>,
}

impl PointEstimate {
    pub fn plain(value: f64) -> Self {
        Self {
            value,
            flags: Vec::new(),
        }
    }
}

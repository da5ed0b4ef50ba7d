//! Generalized propensity scores: each outcome unit's exposure distribution
//! and the score `r(e, W_i) = Pr(E_i = e | W_i)`.
//!
//! Three constructions are provided:
//! - exact enumeration of the `2^{m_i}` neighbor assignments (Bernoulli designs),
//! - a Monte Carlo histogram over simulated assignments (any design),
//! - the closed product form `Π_{z_j=1} p_j Π_{z_j=0} (1 - p_j)` for rows whose
//!   weights are all distinct, which also covers units above the enumeration cap.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{draw_assignment, linear_exposure, Assignment, AssignmentDesign};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, IdMap};

/// Tolerance at which exposure atoms are merged and matched.
pub const ATOM_TOL: f64 = 1e-9;
pub const DEFAULT_ENUMERATION_CAP: usize = 20;
pub const DEFAULT_MC_DRAWS: usize = 10_000;
pub const DEFAULT_BINS: usize = 20;
/// Scores below this value are floored (and flagged) before being divided by.
pub const PROPENSITY_FLOOR: f64 = 1e-6;

/// Granularity at which exposure levels are distinguished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Bucketing {
    /// Distinct values, merged when within `tol` of each other.
    Atoms { tol: f64 },
    /// Half-open bins `[edges[k], edges[k+1])`, the last one closed.
    Bins { edges: Vec<f64> },
}

impl Default for Bucketing {
    fn default() -> Self {
        Self::Atoms { tol: ATOM_TOL }
    }
}

impl Bucketing {
    pub fn atoms() -> Self {
        Self::default()
    }

    /// `n` equal-width bins over `[0, hi]`.
    pub fn equal_width(n: usize, hi: f64) -> Result<Self> {
        if n == 0 || !(hi.is_finite() && hi > 0.0) {
            return Err(Error::Validation(format!(
                "equal-width bucketing needs n >= 1 and a positive range (n = {n}, hi = {hi})"
            )));
        }
        let edges = (0..=n).map(|k| k as f64 * hi / n as f64).collect();
        Ok(Self::Bins { edges })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Atoms { tol } if !(tol.is_finite() && *tol > 0.0) => Err(Error::Validation(
                format!("atom tolerance must be positive, got {tol}"),
            )),
            Self::Bins { edges } => {
                if edges.len() < 2 {
                    return Err(Error::Validation("bucketing needs at least one bin".into()));
                }
                if edges.iter().any(|x| !x.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Validation(
                        "bin edges must be finite and strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Bin holding `e`, snapping values within `ATOM_TOL` below an edge upwards.
    pub fn bin_index(&self, e: f64) -> Option<usize> {
        match self {
            Self::Atoms { .. } => None,
            Self::Bins { edges } => bin_of(edges, e),
        }
    }

    /// Whether two exposure values fall in the same bucket.
    pub fn same_bucket(&self, a: f64, b: f64) -> bool {
        match self {
            Self::Atoms { tol } => (a - b).abs() <= *tol,
            Self::Bins { edges } => match (bin_of(edges, a), bin_of(edges, b)) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
        }
    }
}

fn bin_of(edges: &[f64], e: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !e.is_finite() || e < edges[0] - ATOM_TOL || e > edges[n] + ATOM_TOL {
        return None;
    }
    // First edge strictly above e (after snapping), minus one.
    let k = edges.partition_point(|&x| x - ATOM_TOL <= e);
    Some(k.saturating_sub(1).min(n - 1))
}

/// Where the probability mass of an exposure distribution sits.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Atoms { points: Vec<f64>, tol: f64 },
    Bins { edges: Arc<[f64]> },
}

/// Distribution of one unit's exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDistribution {
    support: Support,
    probs: Vec<f64>,
    complete: bool,
}

impl ExposureDistribution {
    /// Atom distribution from unsorted `(level, mass)` pairs, merging levels
    /// within `tol` of the first level of each run.
    pub fn from_atoms(mut pairs: Vec<(f64, f64)>, tol: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        for (e, p) in pairs {
            match points.last() {
                Some(&anchor) if e - anchor <= tol => *probs.last_mut().unwrap() += p,
                _ => {
                    points.push(e);
                    probs.push(p);
                }
            }
        }
        Self {
            support: Support::Atoms { points, tol },
            probs,
            complete: true,
        }
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// False when only selected atoms are known (product form above the cap).
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Atom positions (atom support) or bin midpoints (binned support).
    pub fn levels(&self) -> Vec<f64> {
        match &self.support {
            Support::Atoms { points, .. } => points.clone(),
            Support::Bins { edges } => edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
        }
    }

    /// Mass of the atom or bin containing `e`: `r(e, W_i)`.
    pub fn prob_at(&self, e: f64) -> Result<f64> {
        match &self.support {
            Support::Atoms { points, tol } => {
                let k = points.partition_point(|&x| x < e - tol);
                Ok(match points.get(k) {
                    Some(&x) if (x - e).abs() <= *tol => self.probs[k],
                    _ => 0.0,
                })
            }
            Support::Bins { edges } => bin_of(edges, e).map(|k| self.probs[k]).ok_or_else(|| {
                Error::Validation(format!(
                    "exposure {e} outside bucketing range [{}, {}]",
                    edges[0],
                    edges[edges.len() - 1]
                ))
            }),
        }
    }

    /// Mean of the exposure (bin midpoints for binned support).
    pub fn mean(&self) -> f64 {
        self.levels()
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| x * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.levels()
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| p * (x - mu) * (x - mu))
            .sum()
    }
}

/// Neighbor weights and treatment probabilities of one unit.
fn neighbor_probabilities(
    graph: &BipartiteGraph,
    design: &AssignmentDesign,
    i: usize,
) -> Result<Vec<(f64, f64)>> {
    graph
        .row_weights(i)?
        .iter()
        .map(|e| {
            design
                .bernoulli_probability(e.diversion)
                .map(|p| (e.weight, p))
                .ok_or_else(|| {
                    Error::Validation(
                        "exact GPS requires an independent Bernoulli design; use Monte Carlo GPS"
                            .into(),
                    )
                })
        })
        .collect()
}

fn enumerate(neighbors: &[(f64, f64)], tol: f64) -> ExposureDistribution {
    let m = neighbors.len();
    let mut pairs = Vec::with_capacity(1 << m);
    for mask in 0u64..(1u64 << m) {
        let mut e = 0.0;
        let mut p = 1.0;
        for (j, &(w, q)) in neighbors.iter().enumerate() {
            if mask >> j & 1 == 1 {
                e += w;
                p *= q;
            } else {
                p *= 1.0 - q;
            }
        }
        pairs.push((e, p));
    }
    ExposureDistribution::from_atoms(pairs, tol)
}

/// Exact exposure distribution of unit `i` by enumerating all neighbor assignments.
pub fn exact_gps(
    graph: &BipartiteGraph,
    design: &AssignmentDesign,
    i: usize,
    cap: usize,
) -> Result<ExposureDistribution> {
    let neighbors = neighbor_probabilities(graph, design, i)?;
    if neighbors.len() > cap {
        return Err(Error::EnumerationCap {
            unit: i,
            degree: neighbors.len(),
            cap,
        });
    }
    Ok(enumerate(&neighbors, ATOM_TOL))
}

/// `Π_{z_j=1} p_j · Π_{z_j=0} (1 - p_j)`: probability of one neighbor pattern.
pub fn product_gps(p: &[f64], z: &[bool]) -> f64 {
    debug_assert_eq!(p.len(), z.len());
    p.iter()
        .zip(z)
        .map(|(&q, &t)| if t { q } else { 1.0 - q })
        .product()
}

/// Whether all weights in the row are pairwise distinct (at `ATOM_TOL`).
pub fn has_distinct_weights(graph: &BipartiteGraph, i: usize) -> bool {
    let mut w: Vec<f64> = graph.row(i).iter().map(|e| e.weight).collect();
    w.sort_by(f64::total_cmp);
    w.windows(2).all(|p| p[1] - p[0] > ATOM_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpsMode {
    Exact,
    MonteCarlo,
    ProductForm,
}

/// Per-unit exposure distributions; write-once, then read-only.
#[derive(Debug, Clone)]
pub struct GpsTable {
    units: Vec<ExposureDistribution>,
    bucketing: Bucketing,
    mode: GpsMode,
    hi: f64,
}

fn range_hi(graph: &BipartiteGraph) -> f64 {
    (0..graph.n_outcome())
        .map(|i| graph.row_sum(i))
        .fold(0.0, f64::max)
}

impl GpsTable {
    /// Table from precomputed distributions.
    pub fn from_parts(
        units: Vec<ExposureDistribution>,
        bucketing: Bucketing,
        mode: GpsMode,
        hi: f64,
    ) -> Self {
        Self {
            units,
            bucketing,
            mode,
            hi,
        }
    }

    /// Exact enumeration for every unit.
    pub fn exact(graph: &BipartiteGraph, design: &AssignmentDesign, cap: usize) -> Result<Self> {
        let units = (0..graph.n_outcome())
            .into_par_iter()
            .map(|i| exact_gps(graph, design, i, cap))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            units,
            bucketing: Bucketing::atoms(),
            mode: GpsMode::Exact,
            hi: range_hi(graph),
        })
    }

    /// Product-form scores under independent treatment probabilities `p`.
    ///
    /// Units within the enumeration cap get their full distribution, every
    /// pattern scored by [`product_gps`]. Units above the cap need distinct
    /// weights (so the exposure identifies the pattern) and an observed
    /// assignment; they get a partial distribution holding the atoms at 0,
    /// the row sum, and the observed exposure.
    pub fn product_form(
        graph: &BipartiteGraph,
        p: &[f64],
        observed: Option<&Assignment>,
        cap: usize,
    ) -> Result<Self> {
        if p.len() != graph.m_diversion() {
            return Err(Error::LengthMismatch {
                expected: graph.m_diversion(),
                got: p.len(),
            });
        }
        let units = (0..graph.n_outcome())
            .map(|i| {
                let row = graph.row(i);
                let probs: Vec<f64> = row.iter().map(|e| p[e.diversion]).collect();
                let weights: Vec<f64> = row.iter().map(|e| e.weight).collect();
                if row.len() <= cap {
                    let m = row.len();
                    let pairs = (0u64..(1u64 << m))
                        .map(|mask| {
                            let z: Vec<bool> = (0..m).map(|j| mask >> j & 1 == 1).collect();
                            let e: f64 = weights
                                .iter()
                                .zip(&z)
                                .filter(|(_, &t)| t)
                                .map(|(w, _)| w)
                                .sum();
                            (e, product_gps(&probs, &z))
                        })
                        .collect();
                    return Ok(ExposureDistribution::from_atoms(pairs, ATOM_TOL));
                }
                let assignment = match observed {
                    Some(a) if has_distinct_weights(graph, i) => a,
                    _ => {
                        return Err(Error::EnumerationCap {
                            unit: i,
                            degree: row.len(),
                            cap,
                        })
                    }
                };
                let m = row.len();
                let z_obs: Vec<bool> = row
                    .iter()
                    .map(|e| assignment.treated(e.diversion))
                    .collect();
                let e_obs: f64 = weights
                    .iter()
                    .zip(&z_obs)
                    .filter(|(_, &t)| t)
                    .map(|(w, _)| w)
                    .sum();
                let mut pairs = vec![
                    (0.0, product_gps(&probs, &vec![false; m])),
                    (weights.iter().sum(), product_gps(&probs, &vec![true; m])),
                ];
                if !pairs.iter().any(|(e, _)| (e - e_obs).abs() <= ATOM_TOL) {
                    pairs.push((e_obs, product_gps(&probs, &z_obs)));
                }
                let mut d = ExposureDistribution::from_atoms(pairs, ATOM_TOL);
                d.complete = false;
                Ok(d)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            units,
            bucketing: Bucketing::atoms(),
            mode: GpsMode::ProductForm,
            hi: range_hi(graph),
        })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn mode(&self) -> GpsMode {
        self.mode
    }

    pub fn bucketing(&self) -> &Bucketing {
        &self.bucketing
    }

    pub fn distribution(&self, i: usize) -> &ExposureDistribution {
        &self.units[i]
    }

    pub fn distributions(&self) -> &[ExposureDistribution] {
        &self.units
    }

    /// Upper end of the exposure range covered by the table.
    pub fn range_hi(&self) -> f64 {
        self.hi
    }

    /// `r(e, W_i)`.
    pub fn gps_at(&self, i: usize, e: f64) -> Result<f64> {
        let d = self.units.get(i).ok_or(Error::OutOfRange {
            index: i,
            len: self.units.len(),
        })?;
        if !e.is_finite() || e < -ATOM_TOL || e > self.hi.max(1.0) + ATOM_TOL {
            return Err(Error::Validation(format!(
                "exposure {e} outside bucketing range [0, {}]",
                self.hi.max(1.0)
            )));
        }
        d.prob_at(e)
    }

    /// Whether an observed exposure counts as receiving `level` (`D_i(level)`).
    pub fn matches(&self, level: f64, observed: f64) -> bool {
        self.bucketing.same_bucket(level, observed)
    }

    /// Writes `outcome_id,kind,lower,upper,probability` rows.
    pub fn write_csv<W: Write>(&self, ids: &IdMap, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["outcome_id", "kind", "lower", "upper", "probability"])?;
        for (i, d) in self.units.iter().enumerate() {
            let id = ids.outcome[i].as_str();
            match &d.support {
                Support::Atoms { points, .. } => {
                    for (x, p) in points.iter().zip(&d.probs) {
                        w.write_record([
                            id,
                            "atom",
                            &x.to_string(),
                            &x.to_string(),
                            &p.to_string(),
                        ])?;
                    }
                }
                Support::Bins { edges } => {
                    for (k, p) in d.probs.iter().enumerate() {
                        w.write_record([
                            id,
                            "bin",
                            &edges[k].to_string(),
                            &edges[k + 1].to_string(),
                            &p.to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Monte Carlo histogram approximation of every unit's exposure distribution.
pub fn mc_gps<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    design: &AssignmentDesign,
    bucketing: &Bucketing,
    n_draws: usize,
    rng: &mut R,
) -> Result<GpsTable> {
    if n_draws == 0 {
        return Err(Error::Validation("n_draws must be at least 1".into()));
    }
    bucketing.validate()?;
    let n = graph.n_outcome();
    let m = graph.m_diversion();
    let total = n_draws as f64;
    let units = match bucketing {
        Bucketing::Atoms { tol } => {
            let mut hist: Vec<Vec<(f64, u64)>> = vec![Vec::new(); n];
            for _ in 0..n_draws {
                let z = draw_assignment(design, m, rng)?;
                let e = linear_exposure(graph, &z)?;
                for (h, &x) in hist.iter_mut().zip(&e.e) {
                    let k = h.partition_point(|a| a.0 < x - tol);
                    match h.get_mut(k) {
                        Some(a) if (a.0 - x).abs() <= *tol => a.1 += 1,
                        _ => h.insert(k, (x, 1)),
                    }
                }
            }
            hist.into_iter()
                .map(|h| {
                    let pairs = h.into_iter().map(|(x, c)| (x, c as f64 / total)).collect();
                    ExposureDistribution::from_atoms(pairs, *tol)
                })
                .collect()
        }
        Bucketing::Bins { edges } => {
            let nb = edges.len() - 1;
            let mut counts = vec![vec![0u64; nb]; n];
            for _ in 0..n_draws {
                let z = draw_assignment(design, m, rng)?;
                let e = linear_exposure(graph, &z)?;
                for (c, &x) in counts.iter_mut().zip(&e.e) {
                    let k = bin_of(edges, x).ok_or_else(|| {
                        Error::Validation(format!("exposure {x} falls outside the bucketing range"))
                    })?;
                    c[k] += 1;
                }
            }
            let shared: Arc<[f64]> = edges.clone().into();
            counts
                .into_iter()
                .map(|c| ExposureDistribution {
                    support: Support::Bins {
                        edges: Arc::clone(&shared),
                    },
                    probs: c.into_iter().map(|k| k as f64 / total).collect(),
                    complete: true,
                })
                .collect()
        }
    };
    Ok(GpsTable {
        units,
        bucketing: bucketing.clone(),
        mode: GpsMode::MonteCarlo,
        hi: range_hi(graph),
    })
}

/// Which GPS construction to use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpsMethod {
    /// Exact when the design is Bernoulli and every degree is within the
    /// cap, Monte Carlo otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsSettings {
    #[serde(default)]
    pub method: GpsMethod,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    /// Monte Carlo bucketing; `None` means equal-width bins over the range.
    #[serde(default)]
    pub bucketing: Option<Bucketing>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_cap() -> usize {
    DEFAULT_ENUMERATION_CAP
}

fn default_draws() -> usize {
    DEFAULT_MC_DRAWS
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl Default for GpsSettings {
    fn default() -> Self {
        Self {
            method: GpsMethod::Auto,
            cap: default_cap(),
            n_draws: default_draws(),
            bucketing: None,
            bins: default_bins(),
        }
    }
}

/// Builds the GPS table requested by `settings`.
pub fn build_gps<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    design: &AssignmentDesign,
    settings: &GpsSettings,
    rng: &mut R,
) -> Result<GpsTable> {
    let max_degree = graph.degrees().into_iter().max().unwrap_or(0);
    let exact = match settings.method {
        GpsMethod::Exact => true,
        GpsMethod::MonteCarlo => false,
        GpsMethod::Auto => design.is_bernoulli() && max_degree <= settings.cap,
    };
    if exact {
        return GpsTable::exact(graph, design, settings.cap);
    }
    let bucketing = match &settings.bucketing {
        Some(b) => b.clone(),
        None => Bucketing::equal_width(settings.bins, range_hi(graph).max(1.0))?,
    };
    mc_gps(graph, design, &bucketing, settings.n_draws, rng)
}

/// Distinct imputation scores present in a table at level `e`, for diagnostics.
pub fn distinct_scores(table: &GpsTable, e: f64) -> Result<usize> {
    let mut seen = HashSet::new();
    for i in 0..table.n_units() {
        seen.insert(table.gps_at(i, e)?.to_bits());
    }
    Ok(seen.len())
}

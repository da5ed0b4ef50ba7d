//! Treatment-assignment designs over diversion units and the linear exposure map.

use std::collections::HashMap;
use std::io::Read;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, IdMap};

/// Randomization law of the treatment vector `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AssignmentDesign {
    /// i.i.d. `Z_j ~ Bernoulli(p)`.
    Bernoulli { p: f64 },
    /// Independent `Z_j ~ Bernoulli(p_j)`.
    BernoulliHeterogeneous { p: Vec<f64> },
    /// Exactly `k` of the `M` diversion units treated, uniformly at random.
    CompletelyRandomized { k: usize },
}

impl AssignmentDesign {
    /// Checks the production invariants: probabilities strictly inside (0, 1)
    /// and `k` in `[0, M]`.
    pub fn validate(&self, m: usize) -> Result<()> {
        let open = |p: f64| p > 0.0 && p < 1.0;
        match self {
            Self::Bernoulli { p } if !open(*p) => Err(Error::Validation(format!(
                "treatment probability {p} must lie strictly inside (0, 1)"
            ))),
            Self::BernoulliHeterogeneous { p } => {
                if p.len() != m {
                    return Err(Error::LengthMismatch {
                        expected: m,
                        got: p.len(),
                    });
                }
                match p.iter().position(|&q| !open(q)) {
                    Some(j) => Err(Error::Validation(format!(
                        "treatment probability {} of diversion unit {j} must lie strictly inside (0, 1)",
                        p[j]
                    ))),
                    None => Ok(()),
                }
            }
            Self::CompletelyRandomized { k } if *k > m => Err(Error::Validation(format!(
                "treated count {k} exceeds M = {m}"
            ))),
            _ => Ok(()),
        }
    }

    /// `Pr(Z_j = 1)` for independent designs; `None` for completely randomized.
    pub fn bernoulli_probability(&self, j: usize) -> Option<f64> {
        match self {
            Self::Bernoulli { p } => Some(*p),
            Self::BernoulliHeterogeneous { p } => p.get(j).copied(),
            Self::CompletelyRandomized { .. } => None,
        }
    }

    pub fn is_bernoulli(&self) -> bool {
        !matches!(self, Self::CompletelyRandomized { .. })
    }

    fn check_structure(&self, m: usize) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        match self {
            Self::Bernoulli { p } if !unit(*p) => {
                Err(Error::Validation(format!("probability {p} outside [0, 1]")))
            }
            Self::BernoulliHeterogeneous { p } if p.len() != m => Err(Error::LengthMismatch {
                expected: m,
                got: p.len(),
            }),
            Self::BernoulliHeterogeneous { p } if !p.iter().all(|&q| unit(q)) => Err(
                Error::Validation("heterogeneous probabilities must lie in [0, 1]".into()),
            ),
            Self::CompletelyRandomized { k } if *k > m => Err(Error::Validation(format!(
                "treated count {k} exceeds M = {m}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Binary treatment vector over diversion units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    z: Vec<bool>,
}

impl Assignment {
    pub fn new(z: Vec<bool>) -> Self {
        Self { z }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Validation(format!(
                    "assignment entries must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn treated(&self, j: usize) -> bool {
        self.z[j]
    }

    pub fn n_treated(&self) -> usize {
        self.z.iter().filter(|&&t| t).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.z
    }
}

/// Per-outcome-unit exposure `E_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureProfile {
    pub e: Vec<f64>,
}

/// Draws one assignment from the design.
///
/// Only structural preconditions are checked here (probabilities in
/// `[0, 1]`); production callers run [`AssignmentDesign::validate`] first.
pub fn draw_assignment<R: Rng + ?Sized>(
    design: &AssignmentDesign,
    m: usize,
    rng: &mut R,
) -> Result<Assignment> {
    design.check_structure(m)?;
    let z = match design {
        AssignmentDesign::Bernoulli { p } => (0..m).map(|_| rng.random_bool(*p)).collect(),
        AssignmentDesign::BernoulliHeterogeneous { p } => {
            p.iter().map(|&q| rng.random_bool(q)).collect()
        }
        AssignmentDesign::CompletelyRandomized { k } => {
            let mut z = vec![false; m];
            for j in sample(rng, m, *k) {
                z[j] = true;
            }
            z
        }
    };
    Ok(Assignment { z })
}

/// `E_i = Σ_j W_ij Z_j` for every outcome unit.
pub fn linear_exposure(graph: &BipartiteGraph, assignment: &Assignment) -> Result<ExposureProfile> {
    if assignment.len() != graph.m_diversion() {
        return Err(Error::LengthMismatch {
            expected: graph.m_diversion(),
            got: assignment.len(),
        });
    }
    let z = assignment.as_slice();
    let e = graph
        .rows()
        .map(|row| {
            row.iter()
                .filter(|edge| z[edge.diversion])
                .map(|edge| edge.weight)
                .sum()
        })
        .collect();
    Ok(ExposureProfile { e })
}

fn read_keyed_column<R: Read>(
    source: R,
    key_col: &str,
    value_col: &str,
    index: &HashMap<&str, usize>,
    len: usize,
) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != 2 || &header[0] != key_col || &header[1] != value_col {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{key_col},{value_col}`"),
        });
    }
    let mut out = vec![f64::NAN; len];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let k = index.get(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown id `{}`", &record[0]),
        })?;
        let v: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid value `{}`", &record[1]),
        })?;
        if !out[*k].is_nan() {
            return Err(Error::Validation(format!(
                "line {line}: duplicate id `{}`",
                &record[0]
            )));
        }
        out[*k] = v;
    }
    if let Some(missing) = out.iter().position(|v| v.is_nan()) {
        return Err(Error::Validation(format!(
            "no `{value_col}` value for id index {missing}"
        )));
    }
    Ok(out)
}

/// Reads a per-diversion-unit probability file with header `diversion_id,p`.
pub fn load_probabilities<R: Read>(source: R, ids: &IdMap) -> Result<Vec<f64>> {
    let p = read_keyed_column(
        source,
        "diversion_id",
        "p",
        &ids.diversion_index(),
        ids.diversion.len(),
    )?;
    AssignmentDesign::BernoulliHeterogeneous { p: p.clone() }.validate(ids.diversion.len())?;
    Ok(p)
}

/// Reads an assignment file with header `diversion_id,z`.
pub fn load_assignment<R: Read>(source: R, ids: &IdMap) -> Result<Assignment> {
    let z = read_keyed_column(
        source,
        "diversion_id",
        "z",
        &ids.diversion_index(),
        ids.diversion.len(),
    )?;
    z.into_iter()
        .map(|v| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::Validation(format!(
                    "assignment entries must be 0 or 1, got {v}"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Assignment::new)
}

/// Reads an outcome-keyed numeric column (e.g. `outcome_id,y` or `outcome_id,e`).
pub fn load_outcome_column<R: Read>(source: R, ids: &IdMap, column: &str) -> Result<Vec<f64>> {
    let v = read_keyed_column(
        source,
        "outcome_id",
        column,
        &ids.outcome_index(),
        ids.outcome.len(),
    )?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("non-finite `{column}` value")));
    }
    Ok(v)
}

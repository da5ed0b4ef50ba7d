use std::path::PathBuf;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BipartiteGraph, Edge};
use crate::error::{Error, Result};

/// How a graph is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorKind {
    /// Each outcome unit draws `m_i ~ Uniform{deg_min..=deg_max}` distinct
    /// neighbors with weight `1/m_i`.
    UniformDegree {
        n_outcome: usize,
        m_diversion: usize,
        deg_min: usize,
        deg_max: usize,
    },
    /// `blocks` disjoint uniform-degree components, after which a
    /// `cross_share` fraction of all edges is rewired across components.
    Blocks {
        n_outcome: usize,
        m_diversion: usize,
        deg_min: usize,
        deg_max: usize,
        blocks: usize,
        cross_share: f64,
    },
    ExternalFile {
        path: PathBuf,
        #[serde(default)]
        normalize: bool,
    },
}

/// A generator plus a seed salt. Serialized flat: the generator's `kind`
/// and parameters sit next to an optional `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FlatSpec", into = "FlatSpec")]
pub struct GraphSpec {
    pub generator: GeneratorKind,
    pub seed: u64,
}

// `flatten` cannot be combined with `deny_unknown_fields`, so the wire form
// repeats the generator variants with a `seed` field each.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum FlatSpec {
    UniformDegree {
        n_outcome: usize,
        m_diversion: usize,
        deg_min: usize,
        deg_max: usize,
        #[serde(default)]
        seed: u64,
    },
    Blocks {
        n_outcome: usize,
        m_diversion: usize,
        deg_min: usize,
        deg_max: usize,
        blocks: usize,
        cross_share: f64,
        #[serde(default)]
        seed: u64,
    },
    ExternalFile {
        path: PathBuf,
        #[serde(default)]
        normalize: bool,
        #[serde(default)]
        seed: u64,
    },
}

impl From<FlatSpec> for GraphSpec {
    fn from(f: FlatSpec) -> Self {
        let (generator, seed) = match f {
            FlatSpec::UniformDegree {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                seed,
            } => (
                GeneratorKind::UniformDegree {
                    n_outcome,
                    m_diversion,
                    deg_min,
                    deg_max,
                },
                seed,
            ),
            FlatSpec::Blocks {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                blocks,
                cross_share,
                seed,
            } => (
                GeneratorKind::Blocks {
                    n_outcome,
                    m_diversion,
                    deg_min,
                    deg_max,
                    blocks,
                    cross_share,
                },
                seed,
            ),
            FlatSpec::ExternalFile {
                path,
                normalize,
                seed,
            } => (GeneratorKind::ExternalFile { path, normalize }, seed),
        };
        Self { generator, seed }
    }
}

impl From<GraphSpec> for FlatSpec {
    fn from(g: GraphSpec) -> Self {
        let seed = g.seed;
        match g.generator {
            GeneratorKind::UniformDegree {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
            } => FlatSpec::UniformDegree {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                seed,
            },
            GeneratorKind::Blocks {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                blocks,
                cross_share,
            } => FlatSpec::Blocks {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                blocks,
                cross_share,
                seed,
            },
            GeneratorKind::ExternalFile { path, normalize } => FlatSpec::ExternalFile {
                path,
                normalize,
                seed,
            },
        }
    }
}

impl GraphSpec {
    pub fn uniform_degree(n: usize, m: usize, deg_min: usize, deg_max: usize, seed: u64) -> Self {
        Self {
            generator: GeneratorKind::UniformDegree {
                n_outcome: n,
                m_diversion: m,
                deg_min,
                deg_max,
            },
            seed,
        }
    }

    pub fn blocks(
        n: usize,
        m: usize,
        deg_min: usize,
        deg_max: usize,
        blocks: usize,
        cross_share: f64,
        seed: u64,
    ) -> Self {
        Self {
            generator: GeneratorKind::Blocks {
                n_outcome: n,
                m_diversion: m,
                deg_min,
                deg_max,
                blocks,
                cross_share,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.generator {
            GeneratorKind::UniformDegree {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
            } => {
                check_sizes(*n_outcome, *m_diversion)?;
                check_degrees(*deg_min, *deg_max, *m_diversion)
            }
            GeneratorKind::Blocks {
                n_outcome,
                m_diversion,
                deg_min,
                deg_max,
                blocks,
                cross_share,
            } => {
                check_sizes(*n_outcome, *m_diversion)?;
                if *blocks == 0 || *blocks > *n_outcome || *blocks > *m_diversion {
                    return Err(Error::Validation(format!(
                        "block count {blocks} must be in [1, min(N, M)]"
                    )));
                }
                if !(0.0..=1.0).contains(cross_share) {
                    return Err(Error::Validation(format!(
                        "cross-edge share {cross_share} must lie in [0, 1]"
                    )));
                }
                let smallest_block = m_diversion / blocks;
                check_degrees(*deg_min, *deg_max, smallest_block)
            }
            GeneratorKind::ExternalFile { .. } => Ok(()),
        }
    }

    /// Block label of every outcome unit for the `blocks` generator.
    pub fn block_labels(&self) -> Option<Vec<usize>> {
        match &self.generator {
            GeneratorKind::Blocks {
                n_outcome, blocks, ..
            } => Some((0..*n_outcome).map(|i| i * blocks / n_outcome).collect()),
            _ => None,
        }
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::Validation(format!(
            "graph sizes must be positive (N = {n}, M = {m})"
        )));
    }
    Ok(())
}

fn check_degrees(deg_min: usize, deg_max: usize, available: usize) -> Result<()> {
    if deg_min < 1 || deg_min > deg_max || deg_max > available {
        return Err(Error::Validation(format!(
            "degree bounds must satisfy 1 <= deg_min <= deg_max <= {available}; got {deg_min}..{deg_max}"
        )));
    }
    Ok(())
}

fn uniform_row<R: Rng + ?Sized>(
    rng: &mut R,
    offset: usize,
    available: usize,
    deg_min: usize,
    deg_max: usize,
) -> Vec<Edge> {
    let m_i = rng.random_range(deg_min..=deg_max);
    let weight = 1.0 / m_i as f64;
    let mut picks: Vec<usize> = sample(rng, available, m_i).into_iter().collect();
    picks.sort_unstable();
    picks
        .into_iter()
        .map(|j| Edge {
            diversion: offset + j,
            weight,
        })
        .collect()
}

const MAX_BLOCK_ATTEMPTS: usize = 64;

/// Draws a synthetic graph; deterministic given the generator state.
pub fn synth_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<BipartiteGraph> {
    spec.validate()?;
    match &spec.generator {
        GeneratorKind::UniformDegree {
            n_outcome,
            m_diversion,
            deg_min,
            deg_max,
        } => {
            let rows = (0..*n_outcome)
                .map(|_| uniform_row(rng, 0, *m_diversion, *deg_min, *deg_max))
                .collect();
            BipartiteGraph::new(*m_diversion, rows)
        }
        GeneratorKind::Blocks {
            n_outcome: _,
            m_diversion,
            deg_min,
            deg_max,
            blocks,
            cross_share,
        } => {
            let (m, k) = (*m_diversion, *blocks);
            let div_start = |b: usize| b * m / k;
            let labels = spec.block_labels().expect("blocks generator");

            let mut within = None;
            for _ in 0..MAX_BLOCK_ATTEMPTS {
                let rows: Vec<Vec<Edge>> = labels
                    .iter()
                    .map(|&b| {
                        let lo = div_start(b);
                        let hi = div_start(b + 1);
                        uniform_row(rng, lo, hi - lo, *deg_min, *deg_max)
                    })
                    .collect();
                let g = BipartiteGraph::new(m, rows)?;
                if g.components().1 == k {
                    within = Some(g);
                    break;
                }
            }
            let within = within.ok_or_else(|| {
                Error::Validation(format!(
                    "could not draw {k} connected blocks in {MAX_BLOCK_ATTEMPTS} attempts; \
                     increase degrees or reduce the block count"
                ))
            })?;

            let mut rows: Vec<Vec<Edge>> = within.rows().map(<[Edge]>::to_vec).collect();
            let slots: Vec<(usize, usize)> = rows
                .iter()
                .enumerate()
                .flat_map(|(i, r)| (0..r.len()).map(move |s| (i, s)))
                .collect();
            let n_cut = (cross_share * slots.len() as f64).round() as usize;
            if n_cut > 0 && k < 2 {
                return Err(Error::Validation(
                    "cross-component edges need at least two blocks".into(),
                ));
            }
            let mut chosen: Vec<usize> = sample(rng, slots.len(), n_cut).into_iter().collect();
            chosen.sort_unstable();
            for idx in chosen {
                let (i, s) = slots[idx];
                let own = labels[i];
                let (lo, hi) = (div_start(own), div_start(own + 1));
                let outside = m - (hi - lo);
                // Rejection-sample a diversion unit outside the block that is
                // not already a neighbor.
                let taken: Vec<usize> = rows[i].iter().map(|e| e.diversion).collect();
                let free = outside - taken.iter().filter(|&&j| j < lo || j >= hi).count();
                if free == 0 {
                    continue;
                }
                loop {
                    let mut j = rng.random_range(0..outside);
                    if j >= lo {
                        j += hi - lo;
                    }
                    if !taken.contains(&j) {
                        rows[i][s].diversion = j;
                        break;
                    }
                }
            }
            BipartiteGraph::new(m, rows)
        }
        GeneratorKind::ExternalFile { .. } => Err(Error::Validation(
            "external-file graphs are loaded, not synthesized".into(),
        )),
    }
}

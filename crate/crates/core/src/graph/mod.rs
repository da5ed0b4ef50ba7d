//! Weighted bipartite graph between outcome units and diversion units.
//!
//! The graph is immutable once built: treatment never changes the weights.

mod io;
mod synth;

pub use io::{load_edge_list, write_edge_list, write_id_map, IdMap, LoadedGraph};
pub use synth::{synth_graph, GeneratorKind, GraphSpec};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance used to decide whether a row is normalized.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// One weighted edge of an outcome unit's adjacency row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub diversion: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    m_diversion: usize,
    rows: Vec<Vec<Edge>>,
    row_normalized: bool,
}

impl BipartiteGraph {
    /// Builds a graph from adjacency rows, validating indices and weights.
    ///
    /// Rows are sorted by diversion index.
    pub fn new(m_diversion: usize, mut rows: Vec<Vec<Edge>>) -> Result<Self> {
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|e| e.diversion);
            for pair in row.windows(2) {
                if pair[0].diversion == pair[1].diversion {
                    return Err(Error::Validation(format!(
                        "duplicate edge between outcome unit {i} and diversion unit {}",
                        pair[0].diversion
                    )));
                }
            }
            for e in row.iter() {
                if e.diversion >= m_diversion {
                    return Err(Error::Validation(format!(
                        "outcome unit {i}: diversion index {} out of range (M = {m_diversion})",
                        e.diversion
                    )));
                }
                if !e.weight.is_finite() {
                    return Err(Error::Validation(format!(
                        "outcome unit {i}: non-finite weight {}",
                        e.weight
                    )));
                }
                if e.weight < 0.0 {
                    return Err(Error::Validation(format!(
                        "outcome unit {i}: negative weight {} (weights must be >= 0)",
                        e.weight
                    )));
                }
            }
        }
        let row_normalized = rows.iter().all(|row| {
            let s: f64 = row.iter().map(|e| e.weight).sum();
            s == 0.0 || (s - 1.0).abs() <= ROW_SUM_TOL
        });
        Ok(Self {
            m_diversion,
            rows,
            row_normalized,
        })
    }

    /// Convenience constructor from `(diversion, weight)` pairs.
    pub fn from_pairs(m_diversion: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let rows = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|(diversion, weight)| Edge { diversion, weight })
                    .collect()
            })
            .collect();
        Self::new(m_diversion, rows)
    }

    pub fn n_outcome(&self) -> usize {
        self.rows.len()
    }

    pub fn m_diversion(&self) -> usize {
        self.m_diversion
    }

    /// Whether every row with positive mass sums to one.
    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// The adjacency row `W_i`.
    pub fn row_weights(&self, i: usize) -> Result<&[Edge]> {
        self.rows
            .get(i)
            .map(Vec::as_slice)
            .ok_or(Error::OutOfRange {
                index: i,
                len: self.rows.len(),
            })
    }

    /// Unchecked row access for hot loops; panics when out of range.
    pub fn row(&self, i: usize) -> &[Edge] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Edge]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.weight).sum()
    }

    pub fn n_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// An outcome unit without positive-weight edges has constant exposure 0.
    pub fn is_isolated(&self, i: usize) -> bool {
        self.rows[i].iter().all(|e| e.weight == 0.0)
    }

    pub fn isolated_units(&self) -> Vec<usize> {
        (0..self.n_outcome())
            .filter(|&i| self.is_isolated(i))
            .collect()
    }

    /// Rescales every row with positive mass to sum to one.
    pub fn normalized(&self) -> Self {
        let rows: Vec<Vec<Edge>> = self
            .rows
            .iter()
            .map(|row| {
                let s: f64 = row.iter().map(|e| e.weight).sum();
                if s > 0.0 {
                    row.iter()
                        .map(|e| Edge {
                            diversion: e.diversion,
                            weight: e.weight / s,
                        })
                        .collect()
                } else {
                    row.clone()
                }
            })
            .collect();
        Self {
            m_diversion: self.m_diversion,
            rows,
            row_normalized: true,
        }
    }

    /// Restriction to the listed outcome units (in the given order).
    pub fn select_outcomes(&self, units: &[usize]) -> Self {
        let rows: Vec<Vec<Edge>> = units.iter().map(|&i| self.rows[i].clone()).collect();
        let row_normalized = self.row_normalized;
        Self {
            m_diversion: self.m_diversion,
            rows,
            row_normalized,
        }
    }

    /// `W z`, the weighted sum of a vector over each row.
    pub fn weighted_sums(&self, values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|e| e.weight * values[e.diversion]).sum())
            .collect()
    }

    /// `tr(W Wᵀ)`, the squared Frobenius norm of the weight matrix.
    pub fn frobenius_sq(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|row| row.iter().map(|e| e.weight * e.weight))
            .sum()
    }

    /// Dense `N × M` weight matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_outcome(), self.m_diversion);
        for (i, row) in self.rows.iter().enumerate() {
            for e in row {
                w[(i, e.diversion)] = e.weight;
            }
        }
        w
    }

    /// Connected components of the bipartite graph over all `N + M` nodes.
    ///
    /// Returns the component label of every outcome unit and the total
    /// number of components (diversion units without edges count as their
    /// own component).
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.n_outcome();
        let mut uf = UnionFind::new(n + self.m_diversion);
        for (i, row) in self.rows.iter().enumerate() {
            for e in row {
                uf.union(i, n + e.diversion);
            }
        }
        let mut label_of_root = vec![usize::MAX; n + self.m_diversion];
        let mut count = 0;
        let mut labels = Vec::with_capacity(n);
        for node in 0..n + self.m_diversion {
            let root = uf.find(node);
            if label_of_root[root] == usize::MAX {
                label_of_root[root] = count;
                count += 1;
            }
            if node < n {
                labels.push(label_of_root[root]);
            }
        }
        (labels, count)
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// The two-type graph used as the running example: `n_single` units each
/// attached to one private diversion unit with weight 1, and `n_double`
/// units each attached to two private diversion units with weight 1/2.
pub fn single_double_graph(n_single: usize, n_double: usize) -> BipartiteGraph {
    let mut rows = Vec::with_capacity(n_single + n_double);
    let mut next = 0;
    for _ in 0..n_single {
        rows.push(vec![Edge {
            diversion: next,
            weight: 1.0,
        }]);
        next += 1;
    }
    for _ in 0..n_double {
        rows.push(vec![
            Edge {
                diversion: next,
                weight: 0.5,
            },
            Edge {
                diversion: next + 1,
                weight: 0.5,
            },
        ]);
        next += 2;
    }
    BipartiteGraph::new(next, rows).expect("single/double graph is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_and_double_rows() {
        let g = single_double_graph(1, 1);
        let s = g.row_weights(0).unwrap();
        assert_eq!(
            s,
            &[Edge {
                diversion: 0,
                weight: 1.0
            }]
        );
        let d = g.row_weights(1).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.iter().all(|e| e.weight == 0.5));
        assert!(g.is_row_normalized());
    }

    #[test]
    fn isolated_row_is_empty() {
        let g = BipartiteGraph::from_pairs(2, vec![vec![(0, 1.0)], vec![]]).unwrap();
        assert!(g.row_weights(1).unwrap().is_empty());
        assert_eq!(g.isolated_units(), vec![1]);
    }

    #[test]
    fn row_index_out_of_range() {
        let g = single_double_graph(1, 0);
        assert!(matches!(g.row_weights(3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn rejects_negative_duplicate_and_out_of_range() {
        assert!(BipartiteGraph::from_pairs(2, vec![vec![(0, -0.1)]]).is_err());
        assert!(BipartiteGraph::from_pairs(2, vec![vec![(0, 0.5), (0, 0.5)]]).is_err());
        assert!(BipartiteGraph::from_pairs(2, vec![vec![(2, 1.0)]]).is_err());
        assert!(BipartiteGraph::from_pairs(2, vec![vec![(1, f64::NAN)]]).is_err());
    }

    #[test]
    fn normalization_flag() {
        let g = BipartiteGraph::from_pairs(2, vec![vec![(0, 2.0), (1, 3.0)]]).unwrap();
        assert!(!g.is_row_normalized());
        let n = g.normalized();
        assert!(n.is_row_normalized());
        assert_eq!(n.row(0)[0].weight, 0.4);
        assert_eq!(n.row(0)[1].weight, 0.6);
    }

    #[test]
    fn components_and_frobenius() {
        let g = BipartiteGraph::from_pairs(
            4,
            vec![vec![(0, 0.5), (1, 0.5)], vec![(1, 1.0)], vec![(2, 1.0)]],
        )
        .unwrap();
        let (labels, count) = g.components();
        assert_eq!(labels[0], labels[1]);
        assert_ne!(labels[0], labels[2]);
        // {0,1,d0,d1}, {2,d2}, {d3}
        assert_eq!(count, 3);
        assert!((g.frobenius_sq() - 2.5).abs() < 1e-15);
        let w = g.to_dense();
        assert_eq!(w[(0, 1)], 0.5);
        assert_eq!(w[(2, 3)], 0.0);
    }
}

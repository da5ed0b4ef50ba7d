use std::collections::HashMap;
use std::io::{Read, Write};

use super::{BipartiteGraph, Edge};
use crate::error::{Error, Result};

/// External string ids for the densely indexed units, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    pub outcome: Vec<String>,
    pub diversion: Vec<String>,
}

impl IdMap {
    /// Synthetic ids `o0, o1, ...` and `d0, d1, ...`.
    pub fn synthetic(n_outcome: usize, m_diversion: usize) -> Self {
        Self {
            outcome: (0..n_outcome).map(|i| format!("o{i}")).collect(),
            diversion: (0..m_diversion).map(|j| format!("d{j}")).collect(),
        }
    }

    pub fn outcome_index(&self) -> HashMap<&str, usize> {
        index_of(&self.outcome)
    }

    pub fn diversion_index(&self) -> HashMap<&str, usize> {
        index_of(&self.diversion)
    }
}

fn index_of(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect()
}

#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: BipartiteGraph,
    pub ids: IdMap,
}

const HEADER: [&str; 3] = ["outcome_id", "diversion_id", "weight"];

/// Reads a comma-delimited edge list with header `outcome_id,diversion_id,weight`.
///
/// A row with empty `diversion_id` and `weight` declares an outcome unit
/// without edges.
pub fn load_edge_list<R: Read>(source: R, normalize: bool) -> Result<LoadedGraph> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != 3 || header.iter().zip(HEADER).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `outcome_id,diversion_id,weight`, got `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut ids = IdMap::default();
    let mut outcome_idx: HashMap<String, usize> = HashMap::new();
    let mut diversion_idx: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<Edge>> = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let (o, d, w) = (&record[0], &record[1], &record[2]);
        if o.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty outcome_id".into(),
            });
        }
        let i = *outcome_idx.entry(o.to_string()).or_insert_with(|| {
            ids.outcome.push(o.to_string());
            rows.push(Vec::new());
            ids.outcome.len() - 1
        });
        if d.is_empty() && w.is_empty() {
            continue;
        }
        if d.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty diversion_id with non-empty weight".into(),
            });
        }
        let weight: f64 = w.parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid weight `{w}`"),
        })?;
        if !weight.is_finite() {
            return Err(Error::Validation(format!(
                "line {line}: non-finite weight `{w}`"
            )));
        }
        if weight < 0.0 {
            return Err(Error::Validation(format!(
                "line {line}: negative weight {weight} (weights must be >= 0)"
            )));
        }
        let j = *diversion_idx.entry(d.to_string()).or_insert_with(|| {
            ids.diversion.push(d.to_string());
            ids.diversion.len() - 1
        });
        if rows[i].iter().any(|e| e.diversion == j) {
            return Err(Error::Validation(format!(
                "line {line}: duplicate edge ({o}, {d})"
            )));
        }
        rows[i].push(Edge {
            diversion: j,
            weight,
        });
    }

    let graph = BipartiteGraph::new(ids.diversion.len(), rows)?;
    let graph = if normalize { graph.normalized() } else { graph };
    Ok(LoadedGraph { graph, ids })
}

/// Writes the graph as an edge list; units without edges get an empty row.
pub fn write_edge_list<W: Write>(graph: &BipartiteGraph, ids: &IdMap, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(HEADER)?;
    for (i, row) in graph.rows().enumerate() {
        let o = &ids.outcome[i];
        if row.is_empty() {
            w.write_record([o.as_str(), "", ""])?;
        }
        for e in row {
            w.write_record([
                o.as_str(),
                ids.diversion[e.diversion].as_str(),
                &format!("{}", e.weight),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one side of the id mapping as a two-column table `<side>_id,index`.
pub fn write_id_map<W: Write>(ids: &[String], side: &str, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([format!("{side}_id"), "index".to_string()])?;
    for (k, id) in ids.iter().enumerate() {
        w.write_record([id.as_str(), &k.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

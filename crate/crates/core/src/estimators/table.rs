use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of a results table: a curve point, an effect estimate, or an
/// interval. Fields that do not apply are left empty.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    /// `mu` for a curve point, `ate` for the effect.
    pub quantity: String,
    pub level: Option<f64>,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub method: Option<String>,
    pub b: Option<usize>,
    pub coverage_level: Option<f64>,
    pub seed: Option<u64>,
    /// Diagnostic flags joined with `; `.
    pub warnings: String,
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record([
            "estimator",
            "quantity",
            "level",
            "value",
            "lower",
            "upper",
            "method",
            "b",
            "coverage_level",
            "seed",
            "warnings",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_json<W: Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    serde_json::to_writer_pretty(sink, rows)?;
    Ok(())
}

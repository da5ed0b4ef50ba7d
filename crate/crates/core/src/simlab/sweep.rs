use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use super::study::{run_study, StudySpec};
use crate::error::{Error, Result};
use crate::graph::GeneratorKind;

/// A block-graph study rerun at several cross-component edge shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub study: StudySpec,
    pub shares: Vec<f64>,
}

/// Coverage of one interval method at one cut share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub share: f64,
    pub estimator: String,
    pub interval: String,
    pub n_sims: usize,
    pub n_failed: usize,
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub bias: Option<f64>,
}

/// Runs the study once per share. Every share reuses `seed`, so the
/// shares differ only through the rewired edges.
pub fn edges_cut_sweep(spec: &SweepSpec, seed: u64) -> Result<Vec<SweepRow>> {
    if spec.shares.is_empty() {
        return Err(Error::Validation(
            "sweep needs at least one cut share".into(),
        ));
    }
    if !matches!(spec.study.dgp.graph.generator, GeneratorKind::Blocks { .. }) {
        return Err(Error::Validation(
            "edges-cut sweep needs a blocks graph".into(),
        ));
    }
    let mut rows = Vec::new();
    for &share in &spec.shares {
        let mut study = spec.study.clone();
        if let GeneratorKind::Blocks { cross_share, .. } = &mut study.dgp.graph.generator {
            *cross_share = share;
        }
        let result = run_study(&study, seed)?;
        for r in result.rows.iter().filter(|r| r.interval != "none") {
            info!(
                "share {share}: {} / {} coverage {:?}",
                r.estimator, r.interval, r.coverage
            );
            rows.push(SweepRow {
                share,
                estimator: r.estimator.clone(),
                interval: r.interval.clone(),
                n_sims: r.n_sims,
                n_failed: r.n_failed,
                coverage: r.coverage,
                mean_width: r.mean_width,
                bias: r.bias,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

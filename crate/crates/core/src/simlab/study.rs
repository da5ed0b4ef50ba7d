use std::io::Write;
use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_outcomes, graph_rng, realize_graph, true_ate, DgpSpec};
use crate::design::{draw_assignment, linear_exposure};
use crate::error::{Error, Result};
use crate::estimators::{Dataset, Estimator};
use crate::gps::{build_gps, GpsSettings, GpsTable};
use crate::graph::BipartiteGraph;
use crate::inference::{
    block_bootstrap, linear_model, naive_bootstrap, ols_contrast_interval, parametric_bootstrap,
    BootstrapOptions, IntervalEstimate, SigmaMethod, WeightSpace,
};
use crate::numerics::ols;
use crate::rng::{derive_seed, substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IntervalMethod {
    NaiveBootstrap,
    OlsAsymptotic,
    #[serde(rename = "parametric-bootstrap")]
    Parametric {
        #[serde(default)]
        sigma_method: SigmaMethod,
    },
    BlockBootstrap,
}

impl IntervalMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NaiveBootstrap => "naive-bootstrap",
            Self::OlsAsymptotic => "ols-asymptotic",
            Self::Parametric { .. } => "parametric-bootstrap",
            Self::BlockBootstrap => "block-bootstrap",
        }
    }

    fn needs_weights(&self) -> bool {
        matches!(self, Self::Parametric { .. })
    }
}

/// An estimator and the intervals to compute around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub estimator: Estimator,
    #[serde(default)]
    pub intervals: Vec<IntervalMethod>,
}

fn study_bootstrap() -> BootstrapOptions {
    BootstrapOptions::with_b(200)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub dgp: DgpSpec,
    pub methods: Vec<MethodSpec>,
    pub n_sims: usize,
    #[serde(default = "study_bootstrap")]
    pub bootstrap: BootstrapOptions,
    #[serde(default)]
    pub gps: GpsSettings,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::Validation("n_sims must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Validation(
                "at least one estimator is required".into(),
            ));
        }
        self.dgp.validate()?;
        self.bootstrap.validate(1)
    }
}

/// One estimate (interval `none`) or one interval from one simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub sim: usize,
    pub estimator: String,
    pub interval: String,
    pub truth: f64,
    pub estimate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

/// Aggregate over simulations for one (estimator, interval) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub estimator: String,
    pub interval: String,
    pub n_sims: usize,
    pub n_failed: usize,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub b: Option<usize>,
    pub level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyResult {
    pub rows: Vec<StudyRow>,
    pub records: Vec<SimRecord>,
    pub n_sims: usize,
    pub seed: u64,
    pub b: usize,
    /// Mean of the per-simulation effect truths.
    pub truth: f64,
}

impl SimStudyResult {
    pub fn row(&self, estimator: &str, interval: &str) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.interval == interval)
    }

    /// Point estimates of one estimator, in simulation order.
    pub fn estimates(&self, estimator: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.estimator == estimator && r.interval == "none")
            .filter_map(|r| r.estimate)
            .collect()
    }

    pub fn write_rows_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_records_csv<W: Write>(&self, sink: W) -> Result<()> {
        write_records(&self.records, sink, true)
    }

    pub fn write_json<W: Write>(&self, sink: W) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }
}

/// Writes records as CSV, optionally with the header row.
pub fn write_records<W: Write>(records: &[SimRecord], sink: W, header: bool) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(sink);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Graph-level state shared by every simulation that uses the graph.
struct Setting {
    graph: BipartiteGraph,
    gps: Arc<GpsTable>,
    weights: Option<WeightSpace>,
    block_labels: Vec<usize>,
    truth: f64,
}

fn prepare(spec: &StudySpec, seed: u64, path: &[u64]) -> Result<Setting> {
    let graph = realize_graph(&spec.dgp.graph, &mut graph_rng(seed, &spec.dgp.graph, path))?;
    spec.dgp.design.validate(graph.m_diversion())?;
    let mut gps_path = vec![tag::GPS];
    gps_path.extend_from_slice(path);
    let gps = build_gps(
        &graph,
        &spec.dgp.design,
        &spec.gps,
        &mut substream(seed, &gps_path),
    )?;
    let needs_weights = spec
        .methods
        .iter()
        .any(|m| m.intervals.iter().any(IntervalMethod::needs_weights));
    let kept: Vec<usize> = (0..graph.n_outcome())
        .filter(|&i| !graph.is_isolated(i))
        .collect();
    let weights = if needs_weights {
        Some(WeightSpace::new(graph.select_outcomes(&kept).to_dense())?)
    } else {
        None
    };
    let block_labels = spec
        .dgp
        .graph
        .block_labels()
        .unwrap_or_else(|| graph.components().0);
    Ok(Setting {
        truth: true_ate(&graph),
        graph,
        gps: Arc::new(gps),
        weights,
        block_labels,
    })
}

/// Computes one interval around `estimator` on `data`.
///
/// `weights` (the rows of `W` for the units of `data`) is needed by the
/// parametric bootstrap, `block_labels` (one per observation) by the block
/// bootstrap.
pub fn compute_interval(
    method: &IntervalMethod,
    estimator: &Estimator,
    data: &Dataset,
    weights: Option<&WeightSpace>,
    block_labels: Option<&[usize]>,
    opts: &BootstrapOptions,
    seed: u64,
) -> Result<IntervalEstimate> {
    let linear = || {
        linear_model(estimator, data).ok_or_else(|| {
            Error::Validation(format!(
                "{} intervals need a linear-model estimator, not {}",
                method.name(),
                estimator.name()
            ))
        })?
    };
    let missing =
        |what: &str| Error::Validation(format!("{} intervals need {what}", method.name()));
    match method {
        IntervalMethod::NaiveBootstrap => naive_bootstrap(data, estimator, opts, seed),
        IntervalMethod::BlockBootstrap => {
            let labels = block_labels.ok_or_else(|| missing("component labels"))?;
            block_bootstrap(data, labels, estimator, opts, seed)
        }
        IntervalMethod::OlsAsymptotic => {
            let (phi, c) = linear()?;
            ols_contrast_interval(&ols(&phi, data.y())?, &c, opts.level)
        }
        IntervalMethod::Parametric { sigma_method } => {
            let (phi, c) = linear()?;
            let w = weights.ok_or_else(|| missing("the weight matrix"))?;
            parametric_bootstrap(data.y(), &phi, w, opts, *sigma_method, seed)?
                .contrast_interval(&c, opts.level, opts.kind)
        }
    }
}

fn run_one(
    spec: &StudySpec,
    seed: u64,
    sim: usize,
    fixed: Option<&Setting>,
) -> Result<Vec<SimRecord>> {
    let s = sim as u64;
    let owned;
    let setting = match fixed {
        Some(f) => f,
        None => {
            owned = prepare(spec, seed, &[s])?;
            &owned
        }
    };
    let graph = &setting.graph;
    let z = draw_assignment(
        &spec.dgp.design,
        graph.m_diversion(),
        &mut substream(seed, &[s, tag::ASSIGNMENT]),
    )?;
    let exposure = linear_exposure(graph, &z)?;
    let y = generate_outcomes(
        &spec.dgp,
        graph,
        &exposure,
        &mut substream(seed, &[s, tag::OUTCOME]),
    )?;
    let data = Dataset::new(graph, Arc::clone(&setting.gps), y, exposure.e)?;
    let truth = setting.truth;
    let labels: Vec<usize> = data
        .units()
        .iter()
        .map(|&i| setting.block_labels[i])
        .collect();

    let mut records = Vec::new();
    for (mi, method) in spec.methods.iter().enumerate() {
        let name = method.estimator.name().to_string();
        let base = SimRecord {
            sim,
            estimator: name,
            interval: "none".into(),
            truth,
            estimate: None,
            lower: None,
            upper: None,
            covered: None,
            error: None,
        };
        let point = method.estimator.ate(&data, &data);
        records.push(match &point {
            Ok(p) => SimRecord {
                estimate: Some(p.value),
                ..base.clone()
            },
            Err(e) => SimRecord {
                error: Some(e.to_string()),
                ..base.clone()
            },
        });
        for (ii, interval) in method.intervals.iter().enumerate() {
            let iseed = derive_seed(seed, &[s, tag::BOOTSTRAP, mi as u64, ii as u64]);
            let rec = SimRecord {
                interval: interval.name().into(),
                ..base.clone()
            };
            let res = if let Err(e) = &point {
                Err(e.to_string())
            } else {
                compute_interval(
                    interval,
                    &method.estimator,
                    &data,
                    setting.weights.as_ref(),
                    Some(&labels),
                    &spec.bootstrap,
                    iseed,
                )
                .map_err(|e| e.to_string())
            };
            records.push(match res {
                Ok(iv) => SimRecord {
                    estimate: Some(iv.point),
                    lower: Some(iv.lower),
                    upper: Some(iv.upper),
                    covered: Some(iv.contains(truth)),
                    ..rec
                },
                Err(e) => SimRecord {
                    error: Some(e),
                    ..rec
                },
            });
        }
    }
    Ok(records)
}

fn aggregate(spec: &StudySpec, records: &[SimRecord]) -> Vec<StudyRow> {
    let mut rows = Vec::new();
    for method in &spec.methods {
        let name = method.estimator.name();
        let labels =
            std::iter::once("none").chain(method.intervals.iter().map(IntervalMethod::name));
        for interval in labels {
            let recs: Vec<&SimRecord> = records
                .iter()
                .filter(|r| r.estimator == name && r.interval == interval)
                .collect();
            let ok: Vec<&&SimRecord> = recs.iter().filter(|r| r.error.is_none()).collect();
            let n_ok = ok.len() as f64;
            let mean = |f: &dyn Fn(&SimRecord) -> f64| {
                (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / n_ok)
            };
            let bias = mean(&|r| r.estimate.unwrap_or(f64::NAN) - r.truth);
            let mse = mean(&|r| (r.estimate.unwrap_or(f64::NAN) - r.truth).powi(2));
            let is_interval = interval != "none";
            rows.push(StudyRow {
                estimator: name.to_string(),
                interval: interval.to_string(),
                n_sims: recs.len(),
                n_failed: recs.len() - ok.len(),
                bias,
                rmse: mse.map(f64::sqrt),
                coverage: if is_interval {
                    mean(&|r| if r.covered == Some(true) { 1.0 } else { 0.0 })
                } else {
                    None
                },
                mean_width: if is_interval {
                    mean(&|r| r.upper.unwrap_or(f64::NAN) - r.lower.unwrap_or(f64::NAN))
                } else {
                    None
                },
                b: (is_interval && interval != "ols-asymptotic").then_some(spec.bootstrap.b),
                level: is_interval.then_some(spec.bootstrap.level),
            });
        }
    }
    rows
}

/// Runs the study, handing each completed chunk of simulations (in order)
/// to `on_chunk` before moving on.
pub fn run_study_streaming<F>(
    spec: &StudySpec,
    seed: u64,
    mut on_chunk: F,
) -> Result<SimStudyResult>
where
    F: FnMut(&[SimRecord]) -> Result<()>,
{
    spec.validate()?;
    let fixed = if spec.dgp.redraw_graph {
        None
    } else {
        Some(prepare(spec, seed, &[])?)
    };
    let chunk = (rayon::current_num_threads() * 2).max(4);
    let mut records = Vec::new();
    let mut truths = Vec::new();
    let mut start = 0;
    while start < spec.n_sims {
        let end = (start + chunk).min(spec.n_sims);
        let batch: Vec<Vec<SimRecord>> = (start..end)
            .into_par_iter()
            .map(|sim| run_one(spec, seed, sim, fixed.as_ref()))
            .collect::<Result<_>>()?;
        let flat: Vec<SimRecord> = batch.into_iter().flatten().collect();
        on_chunk(&flat)?;
        for r in flat.iter().filter(|r| r.interval == "none") {
            if truths.len() <= r.sim {
                truths.resize(r.sim + 1, r.truth);
            }
        }
        records.extend(flat);
        info!("completed {end}/{} simulations", spec.n_sims);
        start = end;
    }
    Ok(SimStudyResult {
        rows: aggregate(spec, &records),
        truth: truths.iter().sum::<f64>() / truths.len().max(1) as f64,
        records,
        n_sims: spec.n_sims,
        seed,
        b: spec.bootstrap.b,
    })
}

/// Runs `n_sims` independent simulations; bit-reproducible for a fixed seed.
pub fn run_study(spec: &StudySpec, seed: u64) -> Result<SimStudyResult> {
    run_study_streaming(spec, seed, |_| Ok(()))
}

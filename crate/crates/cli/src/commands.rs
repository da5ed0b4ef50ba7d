use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::sync::Arc;

use bipgps_core::design::{load_assignment, load_outcome_column, load_probabilities};
use bipgps_core::estimators::{write_results_csv, Dataset, ResultRow};
use bipgps_core::graph::{load_edge_list, single_double_graph, write_edge_list, write_id_map};
use bipgps_core::inference::WeightSpace;
use bipgps_core::rng::{derive_seed, substream, tag};
use bipgps_core::simlab::{
    compute_interval, edges_cut_sweep, graph_rng, realize_graph, run_study_streaming,
    write_records, write_sweep_csv,
};
use bipgps_core::{
    build_gps, draw_assignment, linear_exposure, AssignmentDesign, BipartiteGraph, IdMap,
};
use log::{info, warn};
use serde_json::json;

use crate::config::{EstimateConfig, EstimateInput, LoadedConfig};
use crate::error::CliError;
use crate::output::Output;

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("this command needs a [{name}] section")))
}

fn design(cfg: &LoadedConfig) -> Result<AssignmentDesign, CliError> {
    section(&cfg.config.design, "design").cloned()
}

pub fn graph_gen(cfg: &LoadedConfig, out: &Output) -> Result<Vec<std::path::PathBuf>, CliError> {
    let spec = section(&cfg.config.graph, "graph")?;
    let graph = realize_graph(spec, &mut graph_rng(out.seed, spec, &[]))?;
    let ids = IdMap::synthetic(graph.n_outcome(), graph.m_diversion());

    let (edges, mut w) = out.create("edges.csv")?;
    write_edge_list(&graph, &ids, &mut w)?;
    w.flush()?;
    let (outcome_ids, mut w) = out.create("outcome_ids.csv")?;
    write_id_map(&ids.outcome, "outcome", &mut w)?;
    w.flush()?;
    let (diversion_ids, mut w) = out.create("diversion_ids.csv")?;
    write_id_map(&ids.diversion, "diversion", &mut w)?;
    w.flush()?;

    let mut counts = BTreeMap::new();
    for d in graph.degrees() {
        *counts.entry(d).or_insert(0usize) += 1;
    }
    let histogram: Vec<_> = counts
        .into_iter()
        .map(|(degree, units)| json!({ "degree": degree, "units": units }))
        .collect();
    let summary = json!({
        "n_outcome": graph.n_outcome(),
        "m_diversion": graph.m_diversion(),
        "n_edges": graph.n_edges(),
        "components": graph.components().1,
        "degree_histogram": histogram,
    });
    let (summary_path, mut w) = out.create("graph_summary.json")?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(bipgps_core::Error::from)?;
    w.flush()?;
    let meta = out.sidecar(&edges, summary)?;
    Ok(vec![edges, outcome_ids, diversion_ids, summary_path, meta])
}

/// Graph, ids, design and realized data described by an `[estimate]` section.
struct Observed {
    graph: BipartiteGraph,
    ids: IdMap,
    design: AssignmentDesign,
    e: Vec<f64>,
    y: Vec<f64>,
}

fn open(cfg: &LoadedConfig, p: &std::path::Path) -> Result<File, CliError> {
    let path = cfg.path(p);
    File::open(&path).map_err(|e| {
        CliError::Core(bipgps_core::Error::Validation(format!(
            "cannot open {}: {e}",
            path.display()
        )))
    })
}

fn observe(cfg: &LoadedConfig, est: &EstimateConfig, seed: u64) -> Result<Observed, CliError> {
    match &est.input {
        EstimateInput::Files {
            edges,
            assignment,
            outcomes,
            outcome_column,
            probabilities,
            normalize,
        } => {
            let loaded = load_edge_list(open(cfg, edges)?, *normalize)?;
            let z = load_assignment(open(cfg, assignment)?, &loaded.ids)?;
            let e = linear_exposure(&loaded.graph, &z)?.e;
            let y = load_outcome_column(open(cfg, outcomes)?, &loaded.ids, outcome_column)?;
            let design = match probabilities {
                Some(p) => AssignmentDesign::BernoulliHeterogeneous {
                    p: load_probabilities(open(cfg, p)?, &loaded.ids)?,
                },
                None => design(cfg)?,
            };
            Ok(Observed {
                graph: loaded.graph,
                ids: loaded.ids,
                design,
                e,
                y,
            })
        }
        EstimateInput::SimpleExample { n_single, n_double } => {
            let graph = single_double_graph(*n_single, *n_double);
            let design = cfg
                .config
                .design
                .clone()
                .unwrap_or(AssignmentDesign::Bernoulli { p: 0.5 });
            let z = draw_assignment(
                &design,
                graph.m_diversion(),
                &mut substream(seed, &[tag::ASSIGNMENT]),
            )?;
            let e = linear_exposure(&graph, &z)?.e;
            let y = (0..graph.n_outcome())
                .map(|i| if graph.degree(i) == 2 { e[i] } else { 0.0 })
                .collect();
            Ok(Observed {
                ids: IdMap::synthetic(graph.n_outcome(), graph.m_diversion()),
                graph,
                design,
                e,
                y,
            })
        }
    }
}

pub fn gps(cfg: &LoadedConfig, out: &Output) -> Result<Vec<std::path::PathBuf>, CliError> {
    let (graph, ids, design) = match (&cfg.config.estimate, &cfg.config.graph) {
        (Some(est), _) => {
            let o = observe(cfg, est, out.seed)?;
            (o.graph, o.ids, o.design)
        }
        (None, Some(spec)) => {
            let g = realize_graph(spec, &mut graph_rng(out.seed, spec, &[]))?;
            let ids = IdMap::synthetic(g.n_outcome(), g.m_diversion());
            (g, ids, design(cfg)?)
        }
        (None, None) => {
            return Err(CliError::Config(
                "gps needs an [estimate] or [graph] section".into(),
            ))
        }
    };
    let table = build_gps(
        &graph,
        &design,
        &cfg.config.gps,
        &mut substream(out.seed, &[tag::GPS]),
    )?;
    let (path, mut w) = out.create("gps.csv")?;
    table.write_csv(&ids, &mut w)?;
    w.flush()?;
    let meta = out.sidecar(
        &path,
        json!({ "mode": format!("{:?}", table.mode()), "n_units": table.n_units() }),
    )?;
    Ok(vec![path, meta])
}

pub fn estimate(
    cfg: &LoadedConfig,
    out: &Output,
) -> Result<(Vec<std::path::PathBuf>, Vec<CliError>), CliError> {
    let est = section(&cfg.config.estimate, "estimate")?;
    if est.estimators.is_empty() {
        return Err(CliError::Config("[estimate] lists no estimators".into()));
    }
    let obs = observe(cfg, est, out.seed)?;
    if obs.y.is_empty() {
        return Err(CliError::Config("no outcomes to estimate from".into()));
    }
    obs.design.validate(obs.graph.m_diversion())?;
    let gps = build_gps(
        &obs.graph,
        &obs.design,
        &cfg.config.gps,
        &mut substream(out.seed, &[tag::GPS]),
    )?;
    let data = Dataset::new(&obs.graph, Arc::new(gps), obs.y, obs.e)?;

    let needs_weights = est
        .intervals
        .iter()
        .any(|m| matches!(m, bipgps_core::simlab::IntervalMethod::Parametric { .. }));
    let weights = if needs_weights {
        Some(WeightSpace::new(
            obs.graph.select_outcomes(data.units()).to_dense(),
        )?)
    } else {
        None
    };
    let components = obs.graph.components().0;
    let labels: Vec<usize> = data.units().iter().map(|&i| components[i]).collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, estimator) in est.estimators.iter().enumerate() {
        let name = estimator.name().to_string();
        match estimator.ate(&data, &data) {
            Ok(p) => rows.push(ResultRow {
                estimator: name.clone(),
                quantity: "ate".into(),
                value: p.value,
                seed: Some(out.seed),
                warnings: p.flags.join("; "),
                ..Default::default()
            }),
            Err(e) => {
                warn!("{name}: {e}");
                failures.push(CliError::from(e));
                continue;
            }
        }
        if !est.grid.is_empty() {
            match estimator.curve(&data, &data, &est.grid) {
                Ok(c) => rows.extend(c.grid.iter().zip(&c.mu).map(|(&level, &mu)| ResultRow {
                    estimator: name.clone(),
                    quantity: "mu".into(),
                    level: Some(level),
                    value: mu,
                    seed: Some(out.seed),
                    ..Default::default()
                })),
                Err(e) => failures.push(e.into()),
            }
        }
        for (j, method) in est.intervals.iter().enumerate() {
            let seed = derive_seed(out.seed, &[tag::BOOTSTRAP, k as u64, j as u64]);
            match compute_interval(
                method,
                estimator,
                &data,
                weights.as_ref(),
                Some(&labels),
                &est.bootstrap,
                seed,
            ) {
                Ok(iv) => rows.push(ResultRow {
                    estimator: name.clone(),
                    quantity: "ate".into(),
                    value: iv.point,
                    lower: Some(iv.lower),
                    upper: Some(iv.upper),
                    method: Some(iv.method),
                    b: (iv.b > 0).then_some(iv.b),
                    coverage_level: Some(iv.level),
                    seed: Some(seed),
                    warnings: iv.flags.join("; "),
                    ..Default::default()
                }),
                Err(e) => {
                    warn!("{name} / {}: {e}", method.name());
                    failures.push(e.into());
                }
            }
        }
    }
    let path = out.table("results", &rows, |w| Ok(write_results_csv(&rows, w)?))?;
    let meta = out.sidecar(
        &path,
        json!({ "n_units": data.len(), "failures": failures.iter().map(CliError::to_json).collect::<Vec<_>>() }),
    )?;
    Ok((vec![path, meta], failures))
}

pub fn simulate(cfg: &LoadedConfig, out: &Output) -> Result<Vec<std::path::PathBuf>, CliError> {
    let spec = section(&cfg.config.simulate, "simulate")?;
    spec.validate()?;
    let (records_path, mut records) = out.create("records.csv")?;
    let mut first = true;
    let result = run_study_streaming(spec, out.seed, |chunk| {
        write_records(chunk, &mut records, first)?;
        records.flush()?;
        first = false;
        Ok(())
    })?;
    let path = out.table("study", &result.rows, |w| Ok(result.write_rows_csv(w)?))?;
    for r in &result.rows {
        info!(
            "{} / {}: bias {:?} rmse {:?} coverage {:?} ({} failed)",
            r.estimator, r.interval, r.bias, r.rmse, r.coverage, r.n_failed
        );
    }
    let meta = out.sidecar(
        &path,
        json!({ "n_sims": result.n_sims, "b": result.b, "truth": result.truth }),
    )?;
    Ok(vec![path, records_path, meta])
}

pub fn sweep(cfg: &LoadedConfig, out: &Output) -> Result<Vec<std::path::PathBuf>, CliError> {
    let spec = section(&cfg.config.sweep, "sweep")?;
    let rows = edges_cut_sweep(spec, out.seed)?;
    let path = out.table("sweep", &rows, |w| Ok(write_sweep_csv(&rows, w)?))?;
    let meta = out.sidecar(
        &path,
        json!({ "shares": spec.shares, "n_sims": spec.study.n_sims }),
    )?;
    Ok(vec![path, meta])
}

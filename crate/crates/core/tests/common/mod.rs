#![allow(dead_code)]

use std::sync::Arc;

use bipgps_core::estimators::Dataset;
use bipgps_core::graph::synth_graph;
use bipgps_core::rng::substream;
use bipgps_core::simlab::{generate_outcomes, DgpSpec, EffectForm};
use bipgps_core::{
    build_gps, draw_assignment, linear_exposure, AssignmentDesign, BipartiteGraph, GpsSettings,
    GpsTable, GraphSpec,
};

pub fn half() -> AssignmentDesign {
    AssignmentDesign::Bernoulli { p: 0.5 }
}

pub fn dgp(graph: GraphSpec, effect: EffectForm, s_eps: f64, s_gamma: f64) -> DgpSpec {
    DgpSpec {
        graph,
        design: half(),
        effect,
        sigma2_eps: s_eps,
        sigma2_gamma: s_gamma,
        redraw_graph: false,
    }
}

/// The 1000 × 100, degree 1–10 graph of the synthetic studies.
pub fn reference_graph_spec() -> GraphSpec {
    GraphSpec::uniform_degree(1000, 100, 1, 10, 0)
}

pub fn realize(spec: &GraphSpec, seed: u64) -> BipartiteGraph {
    synth_graph(spec, &mut substream(seed, &[1])).unwrap()
}

pub fn gps_for(graph: &BipartiteGraph) -> Arc<GpsTable> {
    let mut rng = substream(0, &[2]);
    Arc::new(build_gps(graph, &half(), &GpsSettings::default(), &mut rng).unwrap())
}

/// One draw of (Z, E, Y) from `spec` on a fixed graph.
pub fn draw_dataset(
    spec: &DgpSpec,
    graph: &BipartiteGraph,
    gps: &Arc<GpsTable>,
    seed: u64,
) -> Dataset {
    let z = draw_assignment(
        &spec.design,
        graph.m_diversion(),
        &mut substream(seed, &[3]),
    )
    .unwrap();
    let ex = linear_exposure(graph, &z).unwrap();
    let y = generate_outcomes(spec, graph, &ex, &mut substream(seed, &[4])).unwrap();
    Dataset::new(graph, Arc::clone(gps), y, ex.e).unwrap()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

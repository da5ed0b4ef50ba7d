//! Simulation DGPs and the study runner behind the bias / RMSE / coverage tables.

mod study;
mod sweep;

pub use study::{
    compute_interval, run_study, run_study_streaming, write_records, IntervalMethod, MethodSpec,
    SimRecord, SimStudyResult, StudyRow, StudySpec,
};
pub use sweep::{edges_cut_sweep, write_sweep_csv, SweepRow, SweepSpec};

use std::fs::File;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{AssignmentDesign, ExposureProfile};
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, synth_graph, BipartiteGraph, GeneratorKind, GraphSpec};

/// Shape of the unit-level response `μ_i(e)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectForm {
    /// `μ_i(e) = C·e` with `C = N⁻¹ Σ m_i`.
    Homogeneous,
    /// `μ_i(e) = m_i·e`.
    Heterogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub graph: GraphSpec,
    pub design: AssignmentDesign,
    pub effect: EffectForm,
    pub sigma2_eps: f64,
    #[serde(default)]
    pub sigma2_gamma: f64,
    /// Draw a fresh graph for every simulation instead of one per study.
    #[serde(default)]
    pub redraw_graph: bool,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma2_eps", self.sigma2_eps),
            ("sigma2_gamma", self.sigma2_gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        self.graph.validate()
    }
}

/// Generator stream for a synthetic graph: the master seed, salted with the
/// spec's own `seed` and an optional replicate path.
pub fn graph_rng(master: u64, spec: &GraphSpec, path: &[u64]) -> crate::rng::Rng {
    let mut full = vec![crate::rng::tag::GRAPH, spec.seed];
    full.extend_from_slice(path);
    crate::rng::substream(master, &full)
}

/// Synthesizes (or loads) the graph described by `spec`.
pub fn realize_graph<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Result<BipartiteGraph> {
    match &spec.generator {
        GeneratorKind::ExternalFile { path, normalize } => {
            Ok(load_edge_list(File::open(path)?, *normalize)?.graph)
        }
        _ => synth_graph(spec, rng),
    }
}

/// `μ_i(e)` for every unit.
pub fn unit_effects(effect: EffectForm, graph: &BipartiteGraph, e: &[f64]) -> Vec<f64> {
    let m = graph.degrees();
    let c = true_ate(graph);
    e.iter()
        .zip(&m)
        .map(|(&x, &mi)| match effect {
            EffectForm::Homogeneous => c * x,
            EffectForm::Heterogeneous => mi as f64 * x,
        })
        .collect()
}

/// `Y_i = μ_i(E_i) + Σ_j W_ij γ_j + ε_i` with independent normal `γ`, `ε`.
pub fn generate_outcomes<R: Rng + ?Sized>(
    dgp: &DgpSpec,
    graph: &BipartiteGraph,
    exposure: &ExposureProfile,
    rng: &mut R,
) -> Result<Vec<f64>> {
    dgp.validate()?;
    if exposure.e.len() != graph.n_outcome() {
        return Err(Error::LengthMismatch {
            expected: graph.n_outcome(),
            got: exposure.e.len(),
        });
    }
    let normal = |v: f64| Normal::new(0.0, v.sqrt()).expect("variance validated");
    let gamma: Vec<f64> = {
        let d = normal(dgp.sigma2_gamma);
        (0..graph.m_diversion()).map(|_| d.sample(rng)).collect()
    };
    let shared = graph.weighted_sums(&gamma);
    let eps = normal(dgp.sigma2_eps);
    Ok(unit_effects(dgp.effect, graph, &exposure.e)
        .into_iter()
        .zip(shared)
        .map(|(mu, s)| mu + s + eps.sample(rng))
        .collect())
}

/// Effect truth used for bias and coverage: the mean degree of the units
/// entering estimation.
pub fn true_ate(graph: &BipartiteGraph) -> f64 {
    let m: Vec<usize> = (0..graph.n_outcome())
        .filter(|&i| !graph.is_isolated(i))
        .map(|i| graph.degree(i))
        .collect();
    m.iter().sum::<usize>() as f64 / m.len() as f64
}

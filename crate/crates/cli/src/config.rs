use std::path::{Path, PathBuf};

use bipgps_core::estimators::Estimator;
use bipgps_core::graph::GeneratorKind;
use bipgps_core::inference::BootstrapOptions;
use bipgps_core::simlab::{IntervalMethod, StudySpec, SweepSpec};
use bipgps_core::{AssignmentDesign, GpsSettings, GraphSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

const PRESETS: [(&str, &str); 5] = [
    (
        "homogeneous-study",
        include_str!("../presets/homogeneous-study.toml"),
    ),
    (
        "heterogeneous-study",
        include_str!("../presets/heterogeneous-study.toml"),
    ),
    (
        "correlated-coverage",
        include_str!("../presets/correlated-coverage.toml"),
    ),
    (
        "edges-cut-sweep",
        include_str!("../presets/edges-cut-sweep.toml"),
    ),
    (
        "simple-example",
        include_str!("../presets/simple-example.toml"),
    ),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// Everything a command may read. Sections irrelevant to the command are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub graph: Option<GraphSpec>,
    pub design: Option<AssignmentDesign>,
    #[serde(default)]
    pub gps: GpsSettings,
    pub estimate: Option<EstimateConfig>,
    pub simulate: Option<StudySpec>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimateInput {
    /// Edge list, assignment and outcome tables on disk.
    Files {
        edges: PathBuf,
        assignment: PathBuf,
        outcomes: PathBuf,
        #[serde(default = "default_outcome_column")]
        outcome_column: String,
        /// Per-diversion-unit treatment probabilities; overrides `[design]`.
        probabilities: Option<PathBuf>,
        #[serde(default)]
        normalize: bool,
    },
    /// The two-type example drawn in memory from `[design]` and the seed.
    SimpleExample { n_single: usize, n_double: usize },
}

fn default_outcome_column() -> String {
    "y".into()
}

fn one_shot_bootstrap() -> BootstrapOptions {
    BootstrapOptions::with_b(1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: EstimateInput,
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub intervals: Vec<IntervalMethod>,
    #[serde(default = "one_shot_bootstrap")]
    pub bootstrap: BootstrapOptions,
    /// Exposure levels at which to report `μ̂(e)` in addition to the effect.
    #[serde(default)]
    pub grid: Vec<f64>,
}

/// A parsed config plus what is needed for provenance.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub base_dir: PathBuf,
    pub preset: Option<String>,
}

impl LoadedConfig {
    pub fn sha256(&self) -> String {
        Sha256::digest(self.source.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Resolves a config-relative path.
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn parse(source: &str) -> Result<RunConfig, CliError> {
    toml::from_str(source).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<LoadedConfig, CliError> {
    let (source, base_dir, preset) = match (path, preset) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "use either --config or --preset, not both".into(),
            ))
        }
        (Some(p), None) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, dir, None)
        }
        (None, Some(name)) => {
            let text = PRESETS
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.to_string())
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "unknown preset `{name}`; available: {}",
                        preset_names().join(", ")
                    ))
                })?;
            (text, PathBuf::from("."), Some(name.to_string()))
        }
        (None, None) => {
            return Err(CliError::Config(
                "one of --config or --preset is required".into(),
            ))
        }
    };
    let mut loaded = LoadedConfig {
        config: parse(&source)?,
        source,
        base_dir,
        preset,
    };
    loaded.resolve_graph_paths();
    Ok(loaded)
}

impl LoadedConfig {
    /// Makes external edge-list paths relative to the config file, like the
    /// `[estimate]` inputs.
    fn resolve_graph_paths(&mut self) {
        let base = self.base_dir.clone();
        let c = &mut self.config;
        let specs = [
            c.graph.as_mut(),
            c.simulate.as_mut().map(|s| &mut s.dgp.graph),
            c.sweep.as_mut().map(|s| &mut s.study.dgp.graph),
        ];
        for spec in specs.into_iter().flatten() {
            if let GeneratorKind::ExternalFile { path, .. } = &mut spec.generator {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in preset_names() {
            let c = load(None, Some(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(c.config.seed.is_some());
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse("seed = 1\nbogus = 2\n").is_err());
        assert!(parse("[graph]\nkind = \"uniform-degree\"\nn_outcome = 10\nm_diversion = 5\ndeg_min = 1\ndeg_max = 2\nextra = 1\n").is_err());
    }

    #[test]
    fn graph_section_parses() {
        let c = parse("[graph]\nkind = \"uniform-degree\"\nn_outcome = 10\nm_diversion = 5\ndeg_min = 1\ndeg_max = 2\n").unwrap();
        assert_eq!(c.graph, Some(GraphSpec::uniform_degree(10, 5, 1, 2, 0)));
    }
}

use std::path::{Path, PathBuf};

use serde::Deserialize;

use fedrelax::data::{SynthOptions, TestSetSource};
use fedrelax::engine::{EngineConfig, Schedule, StoppingCriterion, UpdateCoupling};
use fedrelax::models::ModelSpec;
use fedrelax::simnet::NetworkModel;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory, relative to the config file.
    pub out: Option<PathBuf>,
    pub data: DataSection,
    #[serde(default)]
    pub model: Option<ModelsConfig>,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub network: NetworkSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub synth: Option<SynthSection>,
    pub files: Option<FilesSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub nodes: usize,
    pub clusters: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default = "one")]
    pub edge_weight: f64,
    pub m_per_node: usize,
    pub m_test: usize,
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    pub cluster_weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub test_source: TestSourceConfig,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSourceConfig {
    #[default]
    Fresh,
    PooledTraining,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesSection {
    pub graph: PathBuf,
    pub data: PathBuf,
    pub test: PathBuf,
}

/// One spec for every node, or a list with one entry per node.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelsConfig {
    Uniform(ModelConfig),
    PerNode(Vec<ModelConfig>),
}

/// Like [`ModelSpec`], but a linear model may leave `dim` to the data.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Constant,
    Linear {
        dim: Option<usize>,
    },
    RegressionTree {
        max_depth: usize,
        #[serde(default = "one_usize")]
        min_leaf: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub lambda: f64,
    pub schedule: Schedule,
    pub max_rounds: usize,
    pub rel_objective_tol: f64,
    pub coupling: UpdateCoupling,
}

impl Default for EngineSection {
    fn default() -> Self {
        let d = EngineConfig::default();
        Self {
            lambda: d.lambda,
            schedule: d.schedule,
            max_rounds: d.stopping.max_rounds,
            rel_objective_tol: d.stopping.rel_objective_tol,
            coupling: d.coupling,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    #[default]
    Reliable,
    LossyIid,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub kind: NetworkKind,
    pub drop_prob: f64,
    pub seed: u64,
    /// Write every message to `trace.jsonl` in the output directory.
    pub trace: bool,
    pub trace_payload: bool,
    pub staleness_bound: Option<usize>,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

/// Values given on the command line; they win over the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub schedule: Option<Schedule>,
}

pub enum DataPlan {
    Synth(SynthSection),
    Files(FilesSection),
}

/// A config with overrides applied and relative paths resolved.
pub struct Experiment {
    pub out: PathBuf,
    pub data: DataPlan,
    pub models: ModelsConfig,
    pub engine: EngineConfig,
    pub network: NetworkSection,
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(cfg, base, overrides)
    }

    fn resolve(cfg: ExperimentConfig, base: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let data = match (cfg.data.synth, cfg.data.files) {
            (Some(mut s), None) => {
                if let Some(seed) = ov.seed {
                    s.seed = seed;
                }
                DataPlan::Synth(s)
            }
            (None, Some(f)) => DataPlan::Files(FilesSection {
                graph: base.join(f.graph),
                data: base.join(f.data),
                test: base.join(f.test),
            }),
            _ => {
                return Err(CliError::Config(
                    "exactly one of [data.synth] and [data.files] must be given".into(),
                ))
            }
        };
        let out = match (&ov.out, cfg.out) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => return Err(CliError::Config("no output directory: set `out` or pass --out".into())),
        };
        let engine = EngineConfig {
            lambda: ov.lambda.unwrap_or(cfg.engine.lambda),
            schedule: ov.schedule.unwrap_or(cfg.engine.schedule),
            stopping: StoppingCriterion {
                max_rounds: cfg.engine.max_rounds,
                rel_objective_tol: cfg.engine.rel_objective_tol,
            },
            loss: Default::default(),
            coupling: cfg.engine.coupling,
        };
        engine.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self {
            out,
            data,
            models: cfg.model.unwrap_or(ModelsConfig::Uniform(ModelConfig::Linear { dim: None })),
            engine,
            network: cfg.network,
        })
    }

    /// Per-node specs for `n` nodes with feature dimension `dim`.
    pub fn specs(&self, n: usize, dim: usize) -> Result<Vec<ModelSpec>, CliError> {
        let to_spec = |m: &ModelConfig| match *m {
            ModelConfig::Constant => ModelSpec::Constant,
            ModelConfig::Linear { dim: d } => ModelSpec::Linear { dim: d.unwrap_or(dim) },
            ModelConfig::RegressionTree { max_depth, min_leaf } => {
                ModelSpec::RegressionTree { max_depth, min_leaf }
            }
        };
        match &self.models {
            ModelsConfig::Uniform(m) => Ok(vec![to_spec(m); n]),
            ModelsConfig::PerNode(list) if list.len() == n => Ok(list.iter().map(to_spec).collect()),
            ModelsConfig::PerNode(list) => Err(CliError::Config(format!(
                "model list has {} entries for {n} nodes",
                list.len()
            ))),
        }
    }

    pub fn network_model(&self) -> NetworkModel {
        match self.network.kind {
            NetworkKind::Reliable => NetworkModel::Reliable,
            NetworkKind::LossyIid => NetworkModel::LossyIid {
                drop_prob: self.network.drop_prob,
                seed: self.network.seed,
            },
        }
    }
}

impl SynthSection {
    pub fn options(&self) -> SynthOptions {
        SynthOptions {
            m_per_node: self.m_per_node,
            m_test: self.m_test,
            noise_std: self.noise_std,
            seed: self.seed,
            test_source: match self.test_source {
                TestSourceConfig::Fresh => TestSetSource::Fresh,
                TestSourceConfig::PooledTraining => TestSetSource::PooledTraining,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Experiment, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Experiment::resolve(cfg, Path::new("/cfg"), &Overrides::default())
    }

    const SYNTH: &str = r#"
out = "run"
[data.synth]
nodes = 4
clusters = 2
p_in = 1.0
p_out = 0.0
m_per_node = 3
m_test = 5
noise_std = 0.1
cluster_weights = [[1.0], [-1.0]]
"#;

    #[test]
    fn defaults_and_paths() {
        let e = parse(SYNTH).unwrap();
        assert_eq!(e.out, Path::new("/cfg/run"));
        assert_eq!(e.engine, EngineConfig::default());
        assert_eq!(e.specs(2, 3).unwrap(), vec![ModelSpec::Linear { dim: 3 }; 2]);
        assert_eq!(e.network_model(), NetworkModel::Reliable);
    }

    #[test]
    fn model_lists() {
        let text = format!(
            "model = [{{ variant = \"constant\" }}, {{ variant = \"regression_tree\", max_depth = 2 }}]\n{SYNTH}"
        );
        let e = parse(&text).unwrap();
        assert_eq!(
            e.specs(2, 1).unwrap(),
            vec![ModelSpec::Constant, ModelSpec::RegressionTree { max_depth: 2, min_leaf: 1 }]
        );
        assert!(e.specs(3, 1).is_err());
    }

    #[test]
    fn exactly_one_data_source() {
        let both = format!("{SYNTH}\n[data.files]\ngraph = \"g\"\ndata = \"d\"\ntest = \"t\"\n");
        assert!(matches!(parse(&both), Err(CliError::Config(_))));
        assert!(matches!(parse("out = \"x\"\n[data]\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let cfg: ExperimentConfig = toml::from_str(SYNTH).unwrap();
        let ov = Overrides {
            out: Some("/elsewhere".into()),
            seed: Some(9),
            lambda: Some(0.0),
            schedule: Some(Schedule::Sequential),
        };
        let e = Experiment::resolve(cfg, Path::new("/cfg"), &ov).unwrap();
        assert_eq!(e.out, Path::new("/elsewhere"));
        assert_eq!(e.engine.lambda, 0.0);
        assert_eq!(e.engine.schedule, Schedule::Sequential);
        match e.data {
            DataPlan::Synth(s) => assert_eq!(s.seed, 9),
            DataPlan::Files(_) => panic!("expected synth"),
        }
    }

    #[test]
    fn negative_lambda_is_a_config_error() {
        let text = format!("{SYNTH}\n[engine]\nlambda = -1.0\n");
        assert!(matches!(parse(&text), Err(CliError::Config(_))));
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{Algorithm, FedConfig, PretrainObjective, Task};
use crate::graph::Modality;
use crate::nn::{Architecture, Fusion, OptimizerConfig};
use crate::partition::{LabelAxis, ModalityAxis, ScenarioConfig, TopologyAxis};
use crate::perturb::{PerturbKind, PerturbSpec};
use crate::synth::{FitParams, ReconstructionMethod};

/// One experiment, parsed from TOML. Unknown keys are rejected everywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub task: Task,
    /// Metric keys to record; empty records every key the task produces.
    #[serde(default)]
    pub metrics: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub sbm: SbmSection,
    #[serde(default)]
    pub rdpg: RdpgSection,
    #[serde(default)]
    pub feat: FeatSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub optim: OptimizerConfig,
    #[serde(default)]
    pub fed: FedConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<PretrainSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb: Option<PerturbSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixSection>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Sbm,
    Rdpg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub generator: Option<Generator>,
    /// Load a saved graph bundle instead of generating.
    pub bundle: Option<PathBuf>,
    pub blocks: Vec<usize>,
    pub modalities: Vec<Modality>,
    pub separation: f32,
    pub seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            generator: None,
            bundle: None,
            blocks: vec![100, 100, 100],
            modalities: vec![Modality::new("text", 16), Modality::new("image", 16)],
            separation: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmSection {
    pub intra_p: f64,
    pub inter_p: f64,
}

impl Default for SbmSection {
    fn default() -> Self {
        Self {
            intra_p: 0.05,
            inter_p: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdpgSection {
    pub latent_dim: usize,
    /// Length of each class direction; same-class edge probability is about `scale²`.
    pub scale: f64,
    pub noise: f64,
}

impl Default for RdpgSection {
    fn default() -> Self {
        Self {
            latent_dim: 3,
            scale: 0.25,
            noise: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatSection {
    pub sigma: f32,
    /// Modality indices whose class means differ; empty means all.
    pub informative_modalities: Vec<usize>,
}

impl Default for FeatSection {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            informative_modalities: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityKind {
    Iid,
    Noniid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Available,
    Sbm,
    Rdpg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Iid,
    Louvain,
    Balanced,
    Dirichlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub modality: ModalityKind,
    pub beta: f64,
    pub topology: TopologyKind,
    pub fit: FitParams,
    pub label: LabelKind,
    pub alpha: f64,
    pub num_clients: usize,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            modality: ModalityKind::Iid,
            beta: 0.5,
            topology: TopologyKind::Available,
            fit: FitParams::default(),
            label: LabelKind::Iid,
            alpha: 1.0,
            num_clients: 4,
            seed: 0,
        }
    }
}

impl ScenarioSection {
    pub fn to_config(&self, master_seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            modality_axis: match self.modality {
                ModalityKind::Iid => ModalityAxis::Iid,
                ModalityKind::Noniid => ModalityAxis::NonIid { beta: self.beta },
            },
            topology_axis: match self.topology {
                TopologyKind::Available => TopologyAxis::Available,
                TopologyKind::Sbm => TopologyAxis::Unavailable {
                    method: ReconstructionMethod::Sbm,
                    fit: self.fit,
                },
                TopologyKind::Rdpg => TopologyAxis::Unavailable {
                    method: ReconstructionMethod::Rdpg,
                    fit: self.fit,
                },
            },
            label_axis: match self.label {
                LabelKind::Iid => LabelAxis::Iid,
                LabelKind::Louvain => LabelAxis::Louvain,
                LabelKind::Balanced => LabelAxis::Balanced,
                LabelKind::Dirichlet => LabelAxis::Dirichlet { alpha: self.alpha },
            },
            num_clients: self.num_clients,
            master_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Modality names fed to the model; empty means all.
    pub modalities: Vec<String>,
    pub hidden: usize,
    pub num_layers: usize,
    pub fusion: Fusion,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::Mmgcn,
            modalities: Vec::new(),
            hidden: 32,
            num_layers: 2,
            fusion: Fusion::Mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub objective: PretrainObjective,
    pub rounds: usize,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            objective: PretrainObjective::Link,
            rounds: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSection {
    pub kind: PerturbKind,
    /// Ratio for a single run.
    #[serde(default)]
    pub ratio: f64,
    /// Ratios for a sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ratios: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_modality: Option<String>,
    /// Sweep seeds; the top-level seeds are used when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

fn default_sigma() -> f64 {
    1.0
}

impl PerturbSection {
    pub fn spec(&self, seed: u64) -> PerturbSpec {
        PerturbSpec {
            kind: self.kind,
            ratio: self.ratio,
            sigma: self.sigma,
            target_modality: self.target_modality.clone(),
            seed,
        }
    }
}

/// Axis lists for scenario-matrix expansion. Absent lists keep the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixSection {
    pub modality: Option<Vec<ModalityKind>>,
    pub topology: Option<Vec<TopologyKind>>,
    pub label: Option<Vec<LabelKind>>,
    pub algorithms: Option<Vec<Algorithm>>,
}

/// Metric keys each task reports.
pub fn task_metrics(task: Task) -> &'static [&'static str] {
    match task {
        Task::NodeClassification => &[
            "accuracy",
            "precision",
            "recall",
            "f1",
            "client_accuracy_mean",
            "client_accuracy_std",
        ],
        Task::LinkPrediction => &["auc", "ap"],
        Task::ModalityMatching => &["auc", "accuracy"],
        Task::ModalityRetrieval => &["recall@1", "recall@5", "recall@10", "mrr"],
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Metric used for convergence and sweeps.
    pub fn primary_metric(&self) -> &str {
        match self.metrics.first() {
            Some(m) => m,
            None => match self.task {
                Task::NodeClassification => "accuracy",
                Task::LinkPrediction | Task::ModalityMatching => "auc",
                Task::ModalityRetrieval => "mrr",
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty".into());
        }
        let known = task_metrics(self.task);
        if let Some(m) = self.metrics.iter().find(|m| !known.contains(&m.as_str())) {
            return bad(format!("metric {m} is not reported for {:?}", self.task));
        }
        let d = &self.dataset;
        if d.bundle.is_some() && d.generator.is_some() {
            return bad("dataset takes a generator or a bundle, not both".into());
        }
        if d.bundle.is_none() {
            if d.blocks.is_empty() || d.blocks.contains(&0) {
                return bad("dataset.blocks must be nonempty and positive".into());
            }
            if d.modalities.is_empty() || d.modalities.iter().any(|m| m.feature_dim == 0) {
                return bad("dataset.modalities must be nonempty with positive dims".into());
            }
            if let Some(&i) = self.feat.informative_modalities.iter().find(|&&i| i >= d.modalities.len()) {
                return bad(format!("informative modality {i} out of range"));
            }
            if let Some(name) = self
                .model
                .modalities
                .iter()
                .find(|n| !d.modalities.iter().any(|m| &m.name == *n))
            {
                return Err(Error::UnknownModality(name.clone()));
            }
            if self.dataset.generator == Some(Generator::Rdpg) && self.rdpg.latent_dim == 0 {
                return bad("rdpg.latent_dim must be positive".into());
            }
        }
        if self.model.hidden == 0 || self.model.num_layers == 0 {
            return bad("model.hidden and model.num_layers must be positive".into());
        }
        self.fed.validate()?;
        if self.fed.algorithm == Algorithm::FedProto && self.task != Task::NodeClassification {
            return bad("fedproto needs the node_classification task".into());
        }
        self.scenario.to_config(0).validate()?;
        if let Some(p) = &self.perturb {
            p.spec(0).validate()?;
            if p.ratios.windows(2).any(|w| w[1] < w[0]) {
                return bad("perturb.ratios must be ascending".into());
            }
            for &r in &p.ratios {
                PerturbSpec { ratio: r, ..p.spec(0) }.validate()?;
            }
        }
        if let Some(m) = &self.matrix {
            let empty = [
                m.modality.as_ref().map(Vec::len),
                m.topology.as_ref().map(Vec::len),
                m.label.as_ref().map(Vec::len),
                m.algorithms.as_ref().map(Vec::len),
            ]
            .contains(&Some(0));
            if empty {
                return bad("matrix axis lists must be nonempty".into());
            }
        }
        Ok(())
    }
}

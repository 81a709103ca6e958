//! Client sharding along the label, topology and modality axes.
//!
//! Each axis has an IID-like and a non-IID setting, giving the 2×2×2
//! scenario matrix built by [`build_scenario`]. Stages always run in the
//! order label → topology → modality, each with its own derived seed.

mod dirichlet;
mod label;
mod louvain;
mod modality;
mod topology;

pub use dirichlet::{largest_remainder, sample_symmetric};
pub use label::{assign_balanced, assign_label_dirichlet, assign_label_iid, assign_louvain};
pub use louvain::{louvain, louvain_with_trace, modularity, LouvainTrace};
pub use modality::{apply_missing_rate, apply_modality_noniid, mask_with_proportions};
pub use topology::apply_topology_axis;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{check_cover, ClientShard, MultimodalGraph, Provenance, SplitMasks};
use crate::rng;
use crate::synth::{FitParams, ReconstructionMethod};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModalityAxis {
    Iid,
    NonIid { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologyAxis {
    Available,
    Unavailable {
        method: ReconstructionMethod,
        fit: FitParams,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LabelAxis {
    Iid,
    Louvain,
    Balanced,
    Dirichlet { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub modality_axis: ModalityAxis,
    pub topology_axis: TopologyAxis,
    pub label_axis: LabelAxis,
    pub num_clients: usize,
    pub master_seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::InvalidParam("num_clients must be at least 1".into()));
        }
        if let ModalityAxis::NonIid { beta } = self.modality_axis {
            if !(beta > 0.0) {
                return Err(Error::InvalidParam(format!("modality beta must be positive, got {beta}")));
            }
        }
        if let LabelAxis::Dirichlet { alpha } = self.label_axis {
            if !(alpha > 0.0) {
                return Err(Error::InvalidParam(format!("label alpha must be positive, got {alpha}")));
            }
        }
        Ok(())
    }

    /// Short human-readable cell name, e.g. `mod-iid/topo-available/label-iid`.
    pub fn cell_name(&self) -> String {
        let modality = match self.modality_axis {
            ModalityAxis::Iid => "iid".to_string(),
            ModalityAxis::NonIid { beta } => format!("noniid({beta})"),
        };
        let topology = match &self.topology_axis {
            TopologyAxis::Available => "available",
            TopologyAxis::Unavailable {
                method: ReconstructionMethod::Sbm,
                ..
            } => "sbm",
            TopologyAxis::Unavailable {
                method: ReconstructionMethod::Rdpg,
                ..
            } => "rdpg",
        };
        let label = match self.label_axis {
            LabelAxis::Iid => "iid".to_string(),
            LabelAxis::Louvain => "louvain".to_string(),
            LabelAxis::Balanced => "balanced".to_string(),
            LabelAxis::Dirichlet { alpha } => format!("dirichlet({alpha})"),
        };
        format!("mod-{modality}/topo-{topology}/label-{label}")
    }

    /// Stable hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    /// `label_histograms[client][class]`.
    pub label_histograms: Vec<Vec<usize>>,
    /// `modality_coverage[client][modality]`: fraction of nodes with the modality present.
    pub modality_coverage: Vec<Vec<f64>>,
    /// Fraction of original edges that survive inside some shard.
    pub edge_retention: f64,
    pub shard_edges: usize,
    /// Per-client total-variation distance of the label histogram from the global one.
    pub label_tv: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionResult {
    pub shards: Vec<ClientShard>,
    /// Client id per global node.
    pub assignment: Vec<usize>,
    pub axis_report: AxisReport,
}

/// Total-variation distance between two histograms (normalized internally).
pub fn tv_distance(a: &[usize], b: &[usize]) -> f64 {
    let (sa, sb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    if sa == 0.0 || sb == 0.0 {
        return 0.0;
    }
    0.5 * a.iter().zip(b).map(|(&x, &y)| (x as f64 / sa - y as f64 / sb).abs()).sum::<f64>()
}

fn label_histogram(graph: &MultimodalGraph) -> Vec<usize> {
    let mut hist = vec![0; graph.num_classes];
    for l in graph.labels.iter().flatten() {
        hist[*l] += 1;
    }
    hist
}

pub fn axis_report(original: &MultimodalGraph, shards: &[ClientShard]) -> AxisReport {
    let global = label_histogram(original);
    let label_histograms: Vec<Vec<usize>> = shards.iter().map(|s| label_histogram(&s.graph)).collect();
    let label_tv = label_histograms.iter().map(|h| tv_distance(h, &global)).collect();
    let modality_coverage = shards
        .iter()
        .map(|s| {
            let n = s.graph.num_nodes.max(1) as f64;
            (0..s.graph.num_modalities())
                .map(|m| s.graph.modality_mask.column(m).iter().filter(|&&b| b).count() as f64 / n)
                .collect()
        })
        .collect();
    let original_edges: HashSet<(usize, usize)> = original.edges.iter().copied().collect();
    let mut kept = 0;
    let mut shard_edges = 0;
    for s in shards {
        shard_edges += s.graph.edges.len();
        for &(u, v) in &s.graph.edges {
            let (a, b) = (s.node_global_ids[u], s.node_global_ids[v]);
            if original_edges.contains(&(a.min(b), a.max(b))) {
                kept += 1;
            }
        }
    }
    AxisReport {
        label_histograms,
        modality_coverage,
        edge_retention: if original.edges.is_empty() {
            1.0
        } else {
            kept as f64 / original.edges.len() as f64
        },
        shard_edges,
        label_tv,
    }
}

/// Induce one shard per client (nodes in ascending global id) with fresh 60/20/20 splits.
pub fn shards_from_assignment(
    graph: &MultimodalGraph,
    assignment: &[usize],
    num_clients: usize,
    provenance: &Provenance,
) -> Result<Vec<ClientShard>> {
    let mut members = vec![Vec::new(); num_clients];
    for (node, &client) in assignment.iter().enumerate() {
        members
            .get_mut(client)
            .ok_or_else(|| Error::InvalidParam(format!("client id {client} >= {num_clients}")))?
            .push(node);
    }
    let shards: Vec<ClientShard> = members
        .into_iter()
        .enumerate()
        .map(|(client_id, node_global_ids)| {
            let sub = graph.induce_subgraph(&node_global_ids)?;
            let split_seed = rng::derive_seed_indexed(provenance.partition_seed, "split", client_id as u64);
            Ok(ClientShard {
                client_id,
                split_masks: SplitMasks::random(&sub, split_seed),
                node_global_ids,
                graph: sub,
                provenance: provenance.clone(),
            })
        })
        .collect::<Result<_>>()?;
    check_cover(&shards, graph.num_nodes)?;
    Ok(shards)
}

fn finish(graph: &MultimodalGraph, assignment: Vec<usize>, k: usize, provenance: Provenance) -> Result<PartitionResult> {
    let shards = shards_from_assignment(graph, &assignment, k, &provenance)?;
    let axis_report = axis_report(graph, &shards);
    Ok(PartitionResult {
        shards,
        assignment,
        axis_report,
    })
}

fn standalone_provenance(method: &str, k: usize, seed: u64) -> Provenance {
    let digest = Sha256::digest(format!("{method}/{k}/{seed}").as_bytes());
    Provenance {
        scenario_hash: digest[..8].iter().map(|b| format!("{b:02x}")).collect(),
        partition_seed: seed,
    }
}

pub fn partition_by_labels_louvain(graph: &MultimodalGraph, k: usize, seed: u64) -> Result<PartitionResult> {
    let assignment = assign_louvain(graph, k)?;
    finish(graph, assignment, k, standalone_provenance("louvain", k, seed))
}

pub fn partition_balanced_greedy(graph: &MultimodalGraph, k: usize, seed: u64) -> Result<PartitionResult> {
    let assignment = assign_balanced(graph, k, seed)?;
    finish(graph, assignment, k, standalone_provenance("balanced", k, seed))
}

pub fn partition_label_dirichlet(graph: &MultimodalGraph, k: usize, alpha: f64, seed: u64) -> Result<PartitionResult> {
    let assignment = assign_label_dirichlet(graph, k, alpha, seed)?;
    finish(graph, assignment, k, standalone_provenance(&format!("dirichlet({alpha})"), k, seed))
}

pub fn partition_label_iid(graph: &MultimodalGraph, k: usize, seed: u64) -> Result<PartitionResult> {
    let assignment = assign_label_iid(graph, k, seed)?;
    finish(graph, assignment, k, standalone_provenance("iid", k, seed))
}

/// Compose label → topology → modality transforms for one scenario cell.
pub fn build_scenario(graph: &MultimodalGraph, config: &ScenarioConfig) -> Result<PartitionResult> {
    config.validate()?;
    let k = config.num_clients;
    let seed_for = |stage: &str| rng::derive_seed(config.master_seed, stage);
    let label_seed = seed_for("label");
    if !matches!(config.label_axis, LabelAxis::Balanced | LabelAxis::Louvain) && !graph.is_labeled() {
        return Err(Error::MissingLabels);
    }
    let assignment = match config.label_axis {
        LabelAxis::Iid => assign_label_iid(graph, k, label_seed)?,
        LabelAxis::Louvain => assign_louvain(graph, k)?,
        LabelAxis::Balanced => assign_balanced(graph, k, label_seed)?,
        LabelAxis::Dirichlet { alpha } => assign_label_dirichlet(graph, k, alpha, label_seed)?,
    };
    let provenance = Provenance {
        scenario_hash: config.hash(),
        partition_seed: seed_for("split"),
    };
    let shards = shards_from_assignment(graph, &assignment, k, &provenance)?;
    let shards = apply_topology_axis(&shards, &config.topology_axis, seed_for("topology"))?;
    let shards = match config.modality_axis {
        ModalityAxis::Iid => shards,
        ModalityAxis::NonIid { beta } => apply_modality_noniid(&shards, beta, seed_for("modality"))?,
    };
    check_cover(&shards, graph.num_nodes)?;
    let axis_report = axis_report(graph, &shards);
    Ok(PartitionResult {
        shards,
        assignment,
        axis_report,
    })
}

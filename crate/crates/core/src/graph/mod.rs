//! Multimodal-attributed graphs and client shards.
//!
//! A [`MultimodalGraph`] is an undirected simple graph over dense node ids
//! `0..num_nodes` where each node carries one feature row per modality, a
//! per-(node, modality) availability bit and an optional class label.
//! Rows whose availability bit is false are stored as zeros.

mod bundle;

pub use bundle::{load_bundle, load_shards, save_bundle, save_shards};

use std::collections::{BTreeSet, HashMap};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Modality {
    pub name: String,
    pub feature_dim: usize,
}

impl Modality {
    pub fn new(name: impl Into<String>, feature_dim: usize) -> Self {
        Self {
            name: name.into(),
            feature_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalGraph {
    pub num_nodes: usize,
    /// Canonical form: `u < v`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    pub modalities: Vec<Modality>,
    /// One `num_nodes × feature_dim` matrix per modality.
    pub features: Vec<Array2<f32>>,
    /// `num_nodes × num_modalities`; true = present.
    pub modality_mask: Array2<bool>,
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
}

impl MultimodalGraph {
    /// Topology-only graph with no modalities and no labels.
    pub fn from_edges(num_nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self {
            num_nodes,
            edges,
            modalities: Vec::new(),
            features: Vec::new(),
            modality_mask: Array2::from_elem((num_nodes, 0), true),
            labels: vec![None; num_nodes],
            num_classes: 0,
        }
        .canonicalize()
    }

    pub fn with_labels(mut self, labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::DimensionMismatch {
                what: "labels".into(),
                expected: self.num_nodes,
                found: labels.len(),
            });
        }
        self.labels = labels;
        self.num_classes = num_classes;
        self.validate()?;
        Ok(self)
    }

    /// Replace all modalities. Every modality is marked present for every node.
    pub fn with_features(mut self, modalities: Vec<Modality>, features: Vec<Array2<f32>>) -> Result<Self> {
        self.modality_mask = Array2::from_elem((self.num_nodes, modalities.len()), true);
        self.modalities = modalities;
        self.features = features;
        self.validate()?;
        Ok(self)
    }

    pub fn num_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn modality_index(&self, name: &str) -> Result<usize> {
        self.modalities
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::UnknownModality(name.to_string()))
    }

    pub fn is_labeled(&self) -> bool {
        self.labels.iter().any(Option::is_some)
    }

    pub fn labeled_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes).filter(|&i| self.labels[i].is_some()).collect()
    }

    /// Dense label vector; errors if any node is unlabeled.
    pub fn dense_labels(&self) -> Result<Vec<usize>> {
        self.labels.iter().map(|l| l.ok_or(Error::MissingLabels)).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Drop self-loops, orient pairs as `u < v`, dedupe and sort.
    pub fn canonicalize(mut self) -> Result<Self> {
        self.edges = canonical_edges(self.num_nodes, &self.edges)?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        for &(u, v) in &self.edges {
            for id in [u, v] {
                if id >= n {
                    return Err(Error::NodeOutOfRange { id, num_nodes: n });
                }
            }
        }
        if self.features.len() != self.modalities.len() {
            return Err(Error::DimensionMismatch {
                what: "feature matrix count".into(),
                expected: self.modalities.len(),
                found: self.features.len(),
            });
        }
        if self.modality_mask.dim() != (n, self.modalities.len()) {
            return Err(Error::DimensionMismatch {
                what: "modality mask rows".into(),
                expected: n,
                found: self.modality_mask.nrows(),
            });
        }
        for (m, (modality, feats)) in self.modalities.iter().zip(&self.features).enumerate() {
            if feats.nrows() != n {
                return Err(Error::DimensionMismatch {
                    what: format!("rows of modality {}", modality.name),
                    expected: n,
                    found: feats.nrows(),
                });
            }
            if feats.ncols() != modality.feature_dim {
                return Err(Error::DimensionMismatch {
                    what: format!("feature_dim of modality {}", modality.name),
                    expected: modality.feature_dim,
                    found: feats.ncols(),
                });
            }
            for i in 0..n {
                if !self.modality_mask[[i, m]] && feats.row(i).iter().any(|&x| x != 0.0) {
                    return Err(Error::InvalidParam(format!(
                        "masked row {i} of modality {} is not zero",
                        modality.name
                    )));
                }
            }
        }
        if self.labels.len() != n {
            return Err(Error::DimensionMismatch {
                what: "labels".into(),
                expected: n,
                found: self.labels.len(),
            });
        }
        if let Some(bad) = self.labels.iter().flatten().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidParam(format!(
                "label {bad} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Mark `(node, modality)` missing and zero the row.
    pub fn mask_out(&mut self, node: usize, modality: usize) {
        self.modality_mask[[node, modality]] = false;
        self.features[modality].row_mut(node).fill(0.0);
    }

    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut g = self.clone();
        g.edges = canonical_edges(g.num_nodes, &edges)?;
        Ok(g)
    }

    /// Subgraph on `node_ids`, relabeled to local ids in input order.
    pub fn induce_subgraph(&self, node_ids: &[usize]) -> Result<Self> {
        let mut local = HashMap::with_capacity(node_ids.len());
        for (i, &g) in node_ids.iter().enumerate() {
            if g >= self.num_nodes {
                return Err(Error::NodeOutOfRange {
                    id: g,
                    num_nodes: self.num_nodes,
                });
            }
            if local.insert(g, i).is_some() {
                return Err(Error::DuplicateNode(g));
            }
        }
        let edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .filter_map(|&(u, v)| match (local.get(&u), local.get(&v)) {
                (Some(&a), Some(&b)) => Some((a.min(b), a.max(b))),
                _ => None,
            })
            .collect();
        let features = self
            .features
            .iter()
            .map(|f| f.select(Axis(0), node_ids))
            .collect();
        let modality_mask = self.modality_mask.select(Axis(0), node_ids);
        let labels = node_ids.iter().map(|&g| self.labels[g]).collect();
        Self {
            num_nodes: node_ids.len(),
            edges,
            modalities: self.modalities.clone(),
            features,
            modality_mask,
            labels,
            num_classes: self.num_classes,
        }
        .canonicalize()
    }
}

pub fn canonical_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut set = BTreeSet::new();
    for &(u, v) in edges {
        for id in [u, v] {
            if id >= num_nodes {
                return Err(Error::NodeOutOfRange { id, num_nodes });
            }
        }
        if u != v {
            set.insert((u.min(v), u.max(v)));
        }
    }
    Ok(set.into_iter().collect())
}

/// Disjoint train/val/test masks over a shard's local nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

pub const TRAIN_FRACTION: f64 = 0.6;
pub const VAL_FRACTION: f64 = 0.2;

impl SplitMasks {
    /// 60/20/20 split of the labeled nodes, shuffled by `seed`.
    pub fn random(graph: &MultimodalGraph, seed: u64) -> Self {
        let mut labeled = graph.labeled_nodes();
        labeled.shuffle(&mut rng::rng_from_seed(seed));
        let total = labeled.len();
        let n_train = (TRAIN_FRACTION * total as f64).round() as usize;
        let n_val = ((VAL_FRACTION * total as f64).round() as usize).min(total - n_train);
        let n = graph.num_nodes;
        let mut masks = Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        };
        for (rank, &i) in labeled.iter().enumerate() {
            if rank < n_train {
                masks.train[i] = true;
            } else if rank < n_train + n_val {
                masks.val[i] = true;
            } else {
                masks.test[i] = true;
            }
        }
        masks
    }

    pub fn count_train(&self) -> usize {
        self.train.iter().filter(|&&b| b).count()
    }

    pub fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub partition_seed: u64,
}

/// One client's private data.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub node_global_ids: Vec<usize>,
    pub graph: MultimodalGraph,
    pub split_masks: SplitMasks,
    pub provenance: Provenance,
}

impl ClientShard {
    /// `D_k`: the number of training nodes.
    pub fn num_samples(&self) -> usize {
        self.split_masks.count_train()
    }
}

/// Check that shard node sets are pairwise disjoint and cover `0..num_nodes`.
pub fn check_cover(shards: &[ClientShard], num_nodes: usize) -> Result<()> {
    let mut seen = vec![false; num_nodes];
    for shard in shards {
        for &g in &shard.node_global_ids {
            if g >= num_nodes {
                return Err(Error::NodeOutOfRange { id: g, num_nodes });
            }
            if std::mem::replace(&mut seen[g], true) {
                return Err(Error::DuplicateNode(g));
            }
        }
    }
    match seen.iter().position(|&s| !s) {
        Some(missing) => Err(Error::InvalidParam(format!("node {missing} assigned to no client"))),
        None => Ok(()),
    }
}

//! Evaluation and data-analysis metrics.
//!
//! Classification ([`accuracy`], [`precision_recall_f1`]), ranking and
//! retrieval ([`auc_roc`], [`average_precision`], [`recall_at_k`], [`mrr`]),
//! text overlap ([`bleu`], [`rouge_l`], [`CiderScorer`]) and data analysis
//! ([`feature_kl`], [`edge_homophily`], [`topology_stats`],
//! [`convergence_round`]). All are pure functions.

mod analysis;
mod classification;
mod ranking;
mod text;

pub use analysis::{
    adjusted_rand_index, convergence_round, edge_homophily, feature_kl, FeatureKl, TopologyStats,
    topology_stats, KL_DIRECTION,
};
pub use classification::{accuracy, precision_recall_f1, Prf};
pub use ranking::{auc_roc, average_precision, mrr, rank_of, recall_at_k};
pub use text::{bleu, cider, rouge_l, tokenize, CiderScorer};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Named scalar metrics; serializes as a flat JSON object with sorted keys.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricReport(pub BTreeMap<String, f64>);

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(|v| v.is_finite())
    }
}

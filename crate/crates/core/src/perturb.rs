//! Robustness perturbations applied to client shards after partitioning.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClientShard, MultimodalGraph, SplitMasks};
use crate::partition::apply_missing_rate;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    EdgeNoise,
    EdgeSparsify,
    LabelNoise,
    LabelSparsify,
    FeatureNoise,
    ModalityMissing,
}

impl PerturbKind {
    pub fn max_ratio(self) -> f64 {
        match self {
            PerturbKind::ModalityMissing => 1.0,
            _ => 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub kind: PerturbKind,
    pub ratio: f64,
    /// Noise scale for `feature_noise`; the applied σ is `sigma · ratio`.
    pub sigma: f64,
    /// Modality dropped by `modality_missing`.
    pub target_modality: Option<String>,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=self.kind.max_ratio()).contains(&self.ratio) {
            return Err(Error::InvalidParam(format!(
                "{:?} ratio {} outside [0, {}]",
                self.kind,
                self.ratio,
                self.kind.max_ratio()
            )));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidParam(format!("sigma {} is negative", self.sigma)));
        }
        if self.kind == PerturbKind::ModalityMissing && self.target_modality.is_none() {
            return Err(Error::InvalidParam("modality_missing needs a target modality".into()));
        }
        Ok(())
    }
}

/// Counts of what an operator changed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbReport {
    pub changed: usize,
    /// Rewires skipped for lack of a free endpoint, or train nodes kept to avoid an empty mask.
    pub skipped: usize,
}

impl PerturbReport {
    fn add(&mut self, other: &PerturbReport) {
        self.changed += other.changed;
        self.skipped += other.skipped;
    }
}

fn count(ratio: f64, total: usize) -> usize {
    ((ratio * total as f64).round() as usize).min(total)
}

fn check_ratio(ratio: f64, max: f64) -> Result<()> {
    if (0.0..=max).contains(&ratio) {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("ratio {ratio} outside [0, {max}]")))
    }
}

/// Rewire `round(ratio · m)` edges: keep one endpoint and move the other to a
/// uniformly chosen node adjacent to it in neither the original nor the current graph.
pub fn edge_noise(graph: &MultimodalGraph, ratio: f64, seed: u64) -> Result<(MultimodalGraph, PerturbReport)> {
    check_ratio(ratio, 0.9)?;
    let m = graph.num_edges();
    let k = count(ratio, m);
    if k == 0 {
        return Ok((graph.clone(), PerturbReport::default()));
    }
    let mut r = rng::rng_from_seed(seed);
    let original: HashSet<(usize, usize)> = graph.edges.iter().copied().collect();
    let mut current = original.clone();
    let mut picked = index::sample(&mut r, m, k).into_vec();
    picked.sort_unstable();
    let mut report = PerturbReport::default();
    for e in picked {
        let (u, v) = graph.edges[e];
        let (keep, drop) = if r.random::<bool>() { (u, v) } else { (v, u) };
        let free: Vec<usize> = (0..graph.num_nodes)
            .filter(|&w| {
                let pair = (keep.min(w), keep.max(w));
                w != keep && w != drop && !original.contains(&pair) && !current.contains(&pair)
            })
            .collect();
        if free.is_empty() {
            report.skipped += 1;
            continue;
        }
        let w = free[r.random_range(0..free.len())];
        current.remove(&(u, v));
        current.insert((keep.min(w), keep.max(w)));
        report.changed += 1;
    }
    Ok((graph.with_edges(current.into_iter().collect())?, report))
}

/// Delete `round(ratio · m)` uniformly chosen edges.
pub fn edge_sparsify(graph: &MultimodalGraph, ratio: f64, seed: u64) -> Result<MultimodalGraph> {
    check_ratio(ratio, 0.9)?;
    let m = graph.num_edges();
    let k = count(ratio, m);
    if k == 0 {
        return Ok(graph.clone());
    }
    let mut dropped = vec![false; m];
    for i in index::sample(&mut rng::rng_from_seed(seed), m, k) {
        dropped[i] = true;
    }
    let kept = graph
        .edges
        .iter()
        .zip(&dropped)
        .filter_map(|(&e, &d)| (!d).then_some(e))
        .collect();
    graph.with_edges(kept)
}

/// Give `round(ratio · |labeled|)` labeled nodes a uniformly chosen different label.
pub fn label_noise(graph: &MultimodalGraph, ratio: f64, seed: u64) -> Result<(MultimodalGraph, PerturbReport)> {
    check_ratio(ratio, 0.9)?;
    let labeled = graph.labeled_nodes();
    let k = count(ratio, labeled.len());
    if k == 0 {
        return Ok((graph.clone(), PerturbReport::default()));
    }
    if graph.num_classes < 2 {
        return Err(Error::InvalidParam("label noise needs at least two classes".into()));
    }
    let mut r = rng::rng_from_seed(seed);
    let mut out = graph.clone();
    for i in index::sample(&mut r, labeled.len(), k) {
        let node = labeled[i];
        let old = out.labels[node].expect("labeled node");
        let shift = r.random_range(1..graph.num_classes);
        out.labels[node] = Some((old + shift) % graph.num_classes);
    }
    Ok((out, PerturbReport { changed: k, skipped: 0 }))
}

/// Drop `round(ratio · |train|)` nodes from the train mask only, never emptying it.
pub fn label_sparsify(splits: &SplitMasks, ratio: f64, seed: u64) -> Result<(SplitMasks, PerturbReport)> {
    check_ratio(ratio, 0.9)?;
    let train = SplitMasks::indices(&splits.train);
    let mut k = count(ratio, train.len());
    let mut report = PerturbReport::default();
    if k == train.len() && k > 0 {
        k -= 1;
        report.skipped = 1;
    }
    let mut out = splits.clone();
    for i in index::sample(&mut rng::rng_from_seed(seed), train.len(), k) {
        out.train[train[i]] = false;
    }
    report.changed = k;
    Ok((out, report))
}

/// Add `N(0, σ²)` noise to feature rows of present modalities.
pub fn feature_noise(graph: &MultimodalGraph, sigma: f64, seed: u64) -> Result<MultimodalGraph> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(graph.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut r = rng::rng_from_seed(seed);
    let mut out = graph.clone();
    for (m, x) in out.features.iter_mut().enumerate() {
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            if graph.modality_mask[[i, m]] {
                row.iter_mut().for_each(|v| *v += normal.sample(&mut r) as f32);
            }
        }
    }
    Ok(out)
}

/// Apply `spec` to every shard with per-client derived seeds.
pub fn apply_to_shards(shards: &[ClientShard], spec: &PerturbSpec) -> Result<(Vec<ClientShard>, PerturbReport)> {
    spec.validate()?;
    if spec.kind == PerturbKind::ModalityMissing {
        let target = spec.target_modality.as_deref().expect("validated");
        let out = apply_missing_rate(shards, target, spec.ratio, spec.seed)?;
        let changed = shards.iter().map(|s| count(spec.ratio, s.graph.num_nodes)).sum();
        return Ok((out, PerturbReport { changed, skipped: 0 }));
    }
    let mut total = PerturbReport::default();
    let mut out = Vec::with_capacity(shards.len());
    for shard in shards {
        let seed = rng::derive_seed_indexed(spec.seed, "perturb", shard.client_id as u64);
        let mut next = shard.clone();
        let report = match spec.kind {
            PerturbKind::EdgeNoise => {
                let (g, rep) = edge_noise(&shard.graph, spec.ratio, seed)?;
                next.graph = g;
                rep
            }
            PerturbKind::EdgeSparsify => {
                next.graph = edge_sparsify(&shard.graph, spec.ratio, seed)?;
                PerturbReport {
                    changed: count(spec.ratio, shard.graph.num_edges()),
                    skipped: 0,
                }
            }
            PerturbKind::LabelNoise => {
                let (g, rep) = label_noise(&shard.graph, spec.ratio, seed)?;
                next.graph = g;
                rep
            }
            PerturbKind::LabelSparsify => {
                let (s, rep) = label_sparsify(&shard.split_masks, spec.ratio, seed)?;
                next.split_masks = s;
                rep
            }
            PerturbKind::FeatureNoise => {
                next.graph = feature_noise(&shard.graph, spec.sigma * spec.ratio, seed)?;
                PerturbReport::default()
            }
            PerturbKind::ModalityMissing => unreachable!("handled above"),
        };
        total.add(&report);
        out.push(next);
    }
    Ok((out, total))
}

/// One point of a perturbation curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub mean: f64,
    /// Standard error of the mean over seeds.
    pub stderr: f64,
    pub values: Vec<f64>,
}

/// For each ratio and seed, perturb fresh from `base` and score with `run`.
///
/// `run(shards, seed)` returns the final metric of one experiment.
pub fn sweep<F>(
    base: &[ClientShard],
    template: &PerturbSpec,
    ratios: &[f64],
    seeds: &[u64],
    run: F,
) -> Result<Vec<SweepRow>>
where
    F: Fn(&[ClientShard], u64) -> Result<f64> + Sync,
{
    if ratios.is_empty() || seeds.is_empty() {
        return Err(Error::EmptyInput("sweep ratios or seeds"));
    }
    if ratios.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParam("sweep ratios must be ascending".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..ratios.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let values = jobs
        .par_iter()
        .map(|&(i, seed)| {
            let spec = PerturbSpec {
                ratio: ratios[i],
                seed: rng::derive_seed_indexed(template.seed, "sweep", seed),
                ..template.clone()
            };
            let (shards, _) = apply_to_shards(base, &spec)?;
            run(&shards, seed)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios
        .iter()
        .enumerate()
        .map(|(i, &ratio)| {
            let v = values[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let stderr = if v.len() > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                0.0
            };
            SweepRow {
                ratio,
                mean,
                stderr,
                values: v,
            }
        })
        .collect())
}

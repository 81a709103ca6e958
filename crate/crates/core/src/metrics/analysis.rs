use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultimodalGraph;

/// Direction of [`feature_kl`]: the client histogram is the first argument.
pub const KL_DIRECTION: &str = "KL(client || global)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureKl {
    /// `KL(client || global)` averaged over modalities and dimensions.
    pub per_client: Vec<f64>,
    /// `pairwise[i][j] = KL(client_i || client_j)`.
    pub pairwise: Vec<Vec<f64>>,
    pub bins: usize,
    pub eps: f64,
    pub direction: String,
}

fn histogram(values: &[f32], lo: f32, hi: f32, bins: usize, eps: f64) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    let width = hi - lo;
    for &x in values {
        let b = (((x - lo) / width) * bins as f32).floor().max(0.0) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    counts
        .into_iter()
        .map(|c| (c as f64 / n + eps) / (1.0 + bins as f64 * eps))
        .collect()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

/// Feature distribution shift between clients using ε-smoothed fixed-bin
/// histograms over each dimension's global range. Masked rows are ignored;
/// a dimension with zero global range contributes 0.
pub fn feature_kl(graphs: &[&MultimodalGraph], bins: usize, eps: f64) -> Result<FeatureKl> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput("clients for feature KL"));
    }
    if bins == 0 || !(eps > 0.0) {
        return Err(Error::InvalidParam("feature KL needs bins >= 1 and eps > 0".into()));
    }
    let dims: Vec<usize> = graphs[0].modalities.iter().map(|m| m.feature_dim).collect();
    for g in graphs {
        let other: Vec<usize> = g.modalities.iter().map(|m| m.feature_dim).collect();
        if other != dims {
            return Err(Error::InvalidParam("clients do not share a feature space".into()));
        }
    }
    let k = graphs.len();
    let mut client_sum = vec![0.0; k];
    let mut client_terms = vec![0usize; k];
    let mut pair_sum = vec![vec![0.0; k]; k];
    let mut pair_terms = vec![vec![0usize; k]; k];

    for (m, &dim) in dims.iter().enumerate() {
        for d in 0..dim {
            let columns: Vec<Vec<f32>> = graphs
                .iter()
                .map(|g| {
                    (0..g.num_nodes)
                        .filter(|&i| g.modality_mask[[i, m]])
                        .map(|i| g.features[m][[i, d]])
                        .collect()
                })
                .collect();
            let pooled: Vec<f32> = columns.iter().flatten().copied().collect();
            if pooled.is_empty() {
                continue;
            }
            let lo = pooled.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = pooled.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let degenerate = hi <= lo;
            let hists: Vec<Option<Vec<f64>>> = columns
                .iter()
                .map(|c| (!c.is_empty() && !degenerate).then(|| histogram(c, lo, hi, bins, eps)))
                .collect();
            let global = (!degenerate).then(|| histogram(&pooled, lo, hi, bins, eps));
            for i in 0..k {
                if columns[i].is_empty() {
                    continue;
                }
                client_terms[i] += 1;
                if let (Some(p), Some(q)) = (&hists[i], &global) {
                    client_sum[i] += kl(p, q);
                }
                for j in 0..k {
                    if columns[j].is_empty() {
                        continue;
                    }
                    pair_terms[i][j] += 1;
                    if let (Some(p), Some(q)) = (&hists[i], &hists[j]) {
                        pair_sum[i][j] += kl(p, q);
                    }
                }
            }
        }
    }
    let avg = |s: f64, t: usize| if t == 0 { 0.0 } else { s / t as f64 };
    Ok(FeatureKl {
        per_client: (0..k).map(|i| avg(client_sum[i], client_terms[i])).collect(),
        pairwise: (0..k)
            .map(|i| (0..k).map(|j| avg(pair_sum[i][j], pair_terms[i][j])).collect())
            .collect(),
        bins,
        eps,
        direction: KL_DIRECTION.into(),
    })
}

/// Fraction of labeled-endpoint edges whose endpoints share a label.
pub fn edge_homophily(graph: &MultimodalGraph) -> Result<f64> {
    let labeled: Vec<(usize, usize)> = graph
        .edges
        .iter()
        .filter_map(|&(u, v)| Some((graph.labels[u]?, graph.labels[v]?)))
        .collect();
    if labeled.is_empty() {
        return Err(Error::EmptyInput("labeled edges for homophily"));
    }
    Ok(labeled.iter().filter(|(a, b)| a == b).count() as f64 / labeled.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyStats {
    pub degree_mean: f64,
    /// Population variance.
    pub degree_variance: f64,
    pub degree_max: usize,
    /// `degree / (n − 1)`; all zeros when `n <= 1`.
    pub centrality: Vec<f64>,
    pub density: f64,
}

pub fn topology_stats(graph: &MultimodalGraph) -> TopologyStats {
    let n = graph.num_nodes;
    let deg = graph.degrees();
    if n == 0 {
        return TopologyStats {
            degree_mean: 0.0,
            degree_variance: 0.0,
            degree_max: 0,
            centrality: Vec::new(),
            density: 0.0,
        };
    }
    let mean = deg.iter().sum::<usize>() as f64 / n as f64;
    let var = deg.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    let denom = n.saturating_sub(1) as f64;
    TopologyStats {
        degree_mean: mean,
        degree_variance: var,
        degree_max: deg.iter().copied().max().unwrap_or(0),
        centrality: deg.iter().map(|&d| if n <= 1 { 0.0 } else { d as f64 / denom }).collect(),
        density: if n <= 1 {
            0.0
        } else {
            2.0 * graph.edges.len() as f64 / (n as f64 * denom)
        },
    }
}

/// 1-indexed first round whose value reaches `threshold · max(curve)`.
pub fn convergence_round(curve: &[f64], threshold: f64) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::EmptyInput("metric curve"));
    }
    let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let target = threshold * best;
    Ok(curve.iter().position(|&v| v >= target).map_or(curve.len(), |p| p + 1))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must align");
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len());
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Modality;
    use ndarray::Array2;
    use rand::Rng;

    fn labeled(n: usize, edges: Vec<(usize, usize)>, labels: Vec<usize>) -> MultimodalGraph {
        let c = labels.iter().max().map_or(1, |m| m + 1);
        MultimodalGraph::from_edges(n, edges)
            .unwrap()
            .with_labels(labels.into_iter().map(Some).collect(), c)
            .unwrap()
    }

    #[test]
    fn homophily_cases() {
        let cliques = labeled(6, vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(edge_homophily(&cliques).unwrap(), 1.0);
        let bip = labeled(4, vec![(0, 2), (0, 3), (1, 2), (1, 3)], vec![0, 0, 1, 1]);
        assert_eq!(edge_homophily(&bip).unwrap(), 0.0);
        assert!(edge_homophily(&labeled(3, vec![], vec![0, 1, 0])).is_err());
        let one_class = labeled(4, vec![(0, 2), (1, 3)], vec![0, 0, 0, 0]);
        assert_eq!(edge_homophily(&one_class).unwrap(), 1.0);
    }

    #[test]
    fn homophily_matches_loop_oracle() {
        let mut r = crate::rng::rng_from_seed(9);
        let mut edges = Vec::new();
        for u in 0..50 {
            for v in u + 1..50 {
                if r.random::<f64>() < 0.1 {
                    edges.push((u, v));
                }
            }
        }
        let labels: Vec<usize> = (0..50).map(|_| r.random_range(0..3)).collect();
        let g = labeled(50, edges.clone(), labels.clone());
        let mut same = 0;
        for (u, v) in &edges {
            if labels[*u] == labels[*v] {
                same += 1;
            }
        }
        assert_eq!(edge_homophily(&g).unwrap(), same as f64 / edges.len() as f64);
    }

    #[test]
    fn star_and_empty_stats() {
        let star = MultimodalGraph::from_edges(5, vec![(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let s = topology_stats(&star);
        assert_eq!(s.degree_max, 4);
        assert_eq!(s.centrality[0], 1.0);
        assert_eq!(s.centrality[1], 0.25);
        let empty = topology_stats(&MultimodalGraph::from_edges(4, vec![]).unwrap());
        assert_eq!((empty.degree_mean, empty.degree_variance, empty.density), (0.0, 0.0, 0.0));
        assert!(empty.centrality.iter().all(|&c| c == 0.0));
        let single = topology_stats(&MultimodalGraph::from_edges(1, vec![]).unwrap());
        assert_eq!(single.centrality, vec![0.0]);
    }

    #[test]
    fn convergence_cases() {
        assert_eq!(convergence_round(&[0.50, 0.90, 0.95, 0.949], 0.995).unwrap(), 3);
        assert_eq!(convergence_round(&[0.7; 5], 0.995).unwrap(), 1);
        assert_eq!(convergence_round(&[0.1, 0.5, 0.996, 0.999, 1.0], 0.995).unwrap(), 3);
        let scaled: Vec<f64> = [0.50, 0.90, 0.95, 0.949].iter().map(|x| x * 37.0).collect();
        assert_eq!(convergence_round(&scaled, 0.995).unwrap(), 3);
        assert!(convergence_round(&[], 0.995).is_err());
    }

    fn feature_graph(values: Vec<f32>) -> MultimodalGraph {
        let n = values.len();
        MultimodalGraph::from_edges(n, vec![])
            .unwrap()
            .with_features(vec![Modality::new("t", 1)], vec![Array2::from_shape_vec((n, 1), values).unwrap()])
            .unwrap()
    }

    #[test]
    fn kl_of_identical_clients_is_near_zero() {
        let mut r = crate::rng::rng_from_seed(5);
        let vals: Vec<f32> = (0..4000).map(|_| r.random::<f32>()).collect();
        let a = feature_graph(vals.clone());
        let b = feature_graph(vals);
        let out = feature_kl(&[&a, &b], 32, 1e-6).unwrap();
        assert!(out.per_client.iter().all(|&d| d < 1e-3));
        assert!(out.pairwise[0][1] < 1e-9);
    }

    #[test]
    fn kl_of_disjoint_supports_matches_closed_form() {
        let a = feature_graph(vec![0.0; 10]);
        let b = feature_graph(vec![1.0; 10]);
        let eps = 1e-6;
        let out = feature_kl(&[&a, &b], 2, eps).unwrap();
        // Two bins: p = (1, 0) and q = (0, 1) after smoothing each mass x -> (x + ε)/(1 + 2ε).
        let hi = (1.0 + eps) / (1.0 + 2.0 * eps);
        let lo = eps / (1.0 + 2.0 * eps);
        let closed = hi * (hi / lo).ln() + lo * (lo / hi).ln();
        assert!((out.pairwise[0][1] - closed).abs() < 1e-9);
        assert!(out.pairwise[0][1] > 0.99 * (1.0 / lo).ln());
    }

    #[test]
    fn kl_ignores_degenerate_dimensions_and_masked_rows() {
        let a = feature_graph(vec![3.0; 5]);
        let b = feature_graph(vec![3.0; 5]);
        let out = feature_kl(&[&a, &b], 8, 1e-6).unwrap();
        assert_eq!(out.per_client, vec![0.0, 0.0]);
        let mut c = feature_graph(vec![0.0, 1.0, 5.0]);
        c.mask_out(2, 0);
        let d = feature_graph(vec![0.0, 1.0, 1.0]);
        let out = feature_kl(&[&c, &d], 2, 1e-6).unwrap();
        assert!(out.per_client.iter().all(|&x| x >= 0.0));
        // Without the masked 5.0 both clients put half their mass in each bin... nearly.
        assert!(out.pairwise[0][1] < 0.2);
    }

    #[test]
    fn ari_cases() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        assert!(adjusted_rand_index(&[0, 1, 0, 1], &[0, 0, 1, 1]) < 0.0);
    }
}

//! Two-phase Louvain community detection on unweighted graphs.
//!
//! Tie-breaking is fixed: nodes are scanned in ascending id, a node moves
//! only for a strictly positive modularity gain, and among equal gains the
//! lowest community id wins.

use std::collections::BTreeMap;

use crate::graph::MultimodalGraph;

const GAIN_EPS: f64 = 1e-12;

/// Output of [`louvain_with_trace`].
#[derive(Clone, Debug)]
pub struct LouvainTrace {
    /// Community id per node, numbered by first appearance in node order.
    pub communities: Vec<usize>,
    pub modularity: f64,
    /// Modularity of the original graph's partition after every local-move pass.
    pub pass_modularities: Vec<f64>,
}

/// Symmetric weighted adjacency; `adj[i][i]` holds twice the internal weight.
struct Level {
    adj: Vec<BTreeMap<usize, f64>>,
}

impl Level {
    fn strength(&self, i: usize) -> f64 {
        self.adj[i].values().sum()
    }
}

pub fn louvain(graph: &MultimodalGraph) -> Vec<usize> {
    louvain_with_trace(graph).communities
}

pub fn louvain_with_trace(graph: &MultimodalGraph) -> LouvainTrace {
    let n = graph.num_nodes;
    let mut membership: Vec<usize> = (0..n).collect();
    let mut pass_modularities = Vec::new();
    if graph.edges.is_empty() {
        return LouvainTrace {
            communities: membership,
            modularity: 0.0,
            pass_modularities,
        };
    }

    let mut level = Level {
        adj: vec![BTreeMap::new(); n],
    };
    for &(u, v) in &graph.edges {
        *level.adj[u].entry(v).or_insert(0.0) += 1.0;
        *level.adj[v].entry(u).or_insert(0.0) += 1.0;
    }
    let two_m = 2.0 * graph.edges.len() as f64;

    loop {
        let size = level.adj.len();
        let strength: Vec<f64> = (0..size).map(|i| level.strength(i)).collect();
        let mut community: Vec<usize> = (0..size).collect();
        let mut totals = strength.clone();
        let mut moved_any = false;

        loop {
            let mut moved = false;
            for i in 0..size {
                let own = community[i];
                let k_i = strength[i];
                let mut links: BTreeMap<usize, f64> = BTreeMap::new();
                for (&j, &w) in &level.adj[i] {
                    if j != i {
                        *links.entry(community[j]).or_insert(0.0) += w;
                    }
                }
                totals[own] -= k_i;
                let score = |c: usize, links: &BTreeMap<usize, f64>| {
                    links.get(&c).copied().unwrap_or(0.0) - totals[c] * k_i / two_m
                };
                let stay = score(own, &links);
                let mut best = own;
                let mut best_score = stay;
                for &c in links.keys() {
                    if c == own {
                        continue;
                    }
                    let s = score(c, &links);
                    // links is ordered by id, so the first maximizer is the lowest id.
                    if s > best_score + GAIN_EPS {
                        best = c;
                        best_score = s;
                    }
                }
                totals[best] += k_i;
                if best != own {
                    community[i] = best;
                    moved = true;
                }
            }
            if !moved {
                break;
            }
            moved_any = true;
            let composed: Vec<usize> = membership.iter().map(|&m| community[m]).collect();
            pass_modularities.push(modularity(graph, &composed));
        }

        if !moved_any {
            break;
        }

        // Aggregate: renumber communities densely by first appearance.
        let mut remap = vec![usize::MAX; size];
        let mut next = 0;
        for &c in &community {
            if remap[c] == usize::MAX {
                remap[c] = next;
                next += 1;
            }
        }
        let mut adj = vec![BTreeMap::new(); next];
        for i in 0..size {
            let ci = remap[community[i]];
            for (&j, &w) in &level.adj[i] {
                *adj[ci].entry(remap[community[j]]).or_insert(0.0) += w;
            }
        }
        for m in membership.iter_mut() {
            *m = remap[community[*m]];
        }
        level = Level { adj };
    }

    let communities = renumber(&membership);
    let modularity = modularity(graph, &communities);
    LouvainTrace {
        communities,
        modularity,
        pass_modularities,
    }
}

fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Newman modularity of a node partition on the unweighted graph.
pub fn modularity(graph: &MultimodalGraph, communities: &[usize]) -> f64 {
    let m = graph.edges.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let k = communities.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; k];
    let mut totals = vec![0.0; k];
    for &(u, v) in &graph.edges {
        if communities[u] == communities[v] {
            internal[communities[u]] += 1.0;
        }
        totals[communities[u]] += 1.0;
        totals[communities[v]] += 1.0;
    }
    internal
        .iter()
        .zip(&totals)
        .map(|(l, d)| l / m - (d / (2.0 * m)).powi(2))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::adjusted_rand_index;
    use crate::synth::{generate_sbm, SbmParams};

    /// All set partitions of `n` items as restricted growth strings.
    fn all_partitions(n: usize) -> Vec<Vec<usize>> {
        fn rec(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
            if prefix.len() == n {
                out.push(prefix.clone());
                return;
            }
            let next = prefix.iter().copied().max().map_or(0, |m| m + 1);
            for c in 0..=next {
                prefix.push(c);
                rec(prefix, n, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        rec(&mut Vec::new(), n, &mut out);
        out
    }

    fn best_by_brute_force(g: &MultimodalGraph) -> (f64, Vec<Vec<usize>>) {
        let parts = all_partitions(g.num_nodes);
        let best = parts.iter().map(|p| modularity(g, p)).fold(f64::MIN, f64::max);
        let argmax = parts.into_iter().filter(|p| (modularity(g, p) - best).abs() < 1e-12).collect();
        (best, argmax)
    }

    #[test]
    fn two_triangles_match_brute_force() {
        let g = MultimodalGraph::from_edges(6, vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let (best, argmax) = best_by_brute_force(&g);
        assert!((best - 0.5).abs() < 1e-12);
        let trace = louvain_with_trace(&g);
        assert_eq!(trace.communities, vec![0, 0, 0, 1, 1, 1]);
        assert!(argmax.contains(&trace.communities));
        assert!((trace.modularity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn complete_graph_is_one_community() {
        let edges = (0..4).flat_map(|u| (u + 1..4).map(move |v| (u, v))).collect();
        let g = MultimodalGraph::from_edges(4, edges).unwrap();
        let (best, argmax) = best_by_brute_force(&g);
        assert_eq!(argmax, vec![vec![0, 0, 0, 0]]);
        assert_eq!(louvain(&g), vec![0, 0, 0, 0]);
        assert!(best.abs() < 1e-12);
    }

    #[test]
    fn edgeless_graph_is_all_singletons() {
        let g = MultimodalGraph::from_edges(4, vec![]).unwrap();
        assert_eq!(louvain(&g), vec![0, 1, 2, 3]);
    }

    #[test]
    fn modularity_never_decreases_across_passes() {
        for seed in 0..5 {
            let g = generate_sbm(&SbmParams {
                block_sizes: vec![30, 30, 30],
                intra_p: 0.2,
                inter_p: 0.03,
                seed,
            })
            .unwrap();
            let trace = louvain_with_trace(&g);
            let singletons: Vec<usize> = (0..g.num_nodes).collect();
            let mut prev = modularity(&g, &singletons);
            for &q in &trace.pass_modularities {
                assert!(q >= prev - 1e-12, "{q} < {prev}");
                prev = q;
            }
            assert!(trace.modularity >= modularity(&g, &singletons));
        }
    }

    #[test]
    fn recovers_sbm_blocks() {
        for seed in 0..10 {
            let g = generate_sbm(&SbmParams {
                block_sizes: vec![40, 40],
                intra_p: 0.4,
                inter_p: 0.01,
                seed,
            })
            .unwrap();
            let truth = g.dense_labels().unwrap();
            let ari = adjusted_rand_index(&louvain(&g), &truth);
            assert!(ari > 0.9, "seed {seed}: ARI {ari}");
        }
    }
}

//! Label-axis node-to-client assignment.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;

use super::dirichlet::{largest_remainder, sample_symmetric};
use super::louvain::louvain;
use crate::error::{Error, Result};
use crate::graph::MultimodalGraph;
use crate::rng;

fn check_clients(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParam("number of clients must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyClients {
            clients: k,
            available: n,
        });
    }
    Ok(())
}

/// Louvain communities bin-packed into `k` clients by node count.
///
/// With fewer communities than clients the largest community is halved
/// (BFS order inside the community) until there are enough pieces.
pub fn assign_louvain(graph: &MultimodalGraph, k: usize) -> Result<Vec<usize>> {
    check_clients(k, graph.num_nodes)?;
    let membership = louvain(graph);
    let num_comm = membership.iter().copied().max().map_or(0, |c| c + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); num_comm];
    for (node, &c) in membership.iter().enumerate() {
        groups[c].push(node);
    }
    let adj = graph.adjacency_lists();
    while groups.len() < k {
        let (largest, _) = groups
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
            .expect("at least one group");
        let group = groups.swap_remove(largest);
        let (a, b) = split_in_bfs_order(&group, &adj);
        groups.push(a);
        groups.push(b);
    }
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut load = vec![0usize; k];
    let mut assignment = vec![0; graph.num_nodes];
    for group in &groups {
        let target = (0..k).min_by_key(|&c| (load[c], c)).expect("k >= 1");
        load[target] += group.len();
        for &node in group {
            assignment[node] = target;
        }
    }
    Ok(assignment)
}

/// Halve a node group along BFS order restricted to the group. Both halves are nonempty
/// when the group has at least two nodes; each half is sorted.
fn split_in_bfs_order(group: &[usize], adj: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let members: std::collections::HashSet<usize> = group.iter().copied().collect();
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    let mut seen = std::collections::HashSet::new();
    let mut order = Vec::with_capacity(group.len());
    for &start in &sorted {
        if !seen.insert(start) {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if members.contains(&v) && seen.insert(v) {
                    queue.push_back(v);
                }
            }
        }
    }
    let half = order.len().div_ceil(2);
    let mut a = order[..half].to_vec();
    let mut b = order[half..].to_vec();
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

/// BFS-grown balanced regions, greedily keeping cut edges low. Region sizes
/// differ from `n / k` by at most one. Stand-in for multilevel METIS.
pub fn assign_balanced(graph: &MultimodalGraph, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = graph.num_nodes;
    check_clients(k, n)?;
    let adj = graph.adjacency_lists();
    let mut priority: Vec<usize> = (0..n).collect();
    priority.shuffle(&mut rng::rng_from_seed(seed));
    let mut rank = vec![0; n];
    for (r, &node) in priority.iter().enumerate() {
        rank[node] = r;
    }

    let mut assignment = vec![usize::MAX; n];
    let mut unassigned_deg: Vec<i64> = adj.iter().map(|a| a.len() as i64).collect();
    for client in 0..k {
        let target = n / k + usize::from(client < n % k);
        let mut conn_in = vec![0i64; n];
        let mut frontier: Vec<usize> = Vec::new();
        for _ in 0..target {
            frontier.retain(|&v| assignment[v] == usize::MAX);
            let pick = if frontier.is_empty() {
                // Start (or restart) from the most peripheral free node.
                (0..n)
                    .filter(|&v| assignment[v] == usize::MAX)
                    .min_by_key(|&v| (unassigned_deg[v], v))
                    .expect("enough unassigned nodes")
            } else {
                *frontier
                    .iter()
                    .max_by(|&&a, &&b| {
                        let sa = conn_in[a] - unassigned_deg[a];
                        let sb = conn_in[b] - unassigned_deg[b];
                        sa.cmp(&sb).then(rank[b].cmp(&rank[a]))
                    })
                    .expect("nonempty frontier")
            };
            assignment[pick] = client;
            for &v in &adj[pick] {
                unassigned_deg[v] -= 1;
                if assignment[v] == usize::MAX {
                    if conn_in[v] == 0 {
                        frontier.push(v);
                    }
                    conn_in[v] += 1;
                }
            }
        }
    }
    Ok(assignment)
}

/// For each class, client proportions ~ Dirichlet(alpha · 1_k); unlabeled nodes go to
/// uniformly random clients. Empty clients are repaired by moving one node from the
/// largest client.
pub fn assign_label_dirichlet(graph: &MultimodalGraph, k: usize, alpha: f64, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParam("number of clients must be at least 1".into()));
    }
    let labeled = graph.labeled_nodes();
    if labeled.len() < k {
        return Err(Error::TooManyClients {
            clients: k,
            available: labeled.len(),
        });
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut assignment = vec![usize::MAX; graph.num_nodes];
    for class in 0..graph.num_classes {
        let mut nodes: Vec<usize> = labeled.iter().copied().filter(|&i| graph.labels[i] == Some(class)).collect();
        let proportions = sample_symmetric(alpha, k, &mut rng)?;
        nodes.shuffle(&mut rng);
        let counts = largest_remainder(nodes.len(), &proportions);
        let mut cursor = 0;
        for (client, &count) in counts.iter().enumerate() {
            for &node in &nodes[cursor..cursor + count] {
                assignment[node] = client;
            }
            cursor += count;
        }
    }
    for slot in assignment.iter_mut().filter(|a| **a == usize::MAX) {
        *slot = rng.random_range(0..k);
    }
    repair_empty_clients(&mut assignment, k);
    Ok(assignment)
}

fn repair_empty_clients(assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).expect("k >= 1");
        let donor = assignment.iter().rposition(|&a| a == largest).expect("largest client is nonempty");
        assignment[donor] = empty;
    }
}

/// Per class, shuffle and deal round-robin; the dealing pointer carries over
/// between classes so client totals stay balanced too.
pub fn assign_label_iid(graph: &MultimodalGraph, k: usize, seed: u64) -> Result<Vec<usize>> {
    check_clients(k, graph.num_nodes)?;
    let mut rng = rng::rng_from_seed(seed);
    let mut assignment = vec![0; graph.num_nodes];
    let mut pointer = 0;
    let mut deal = |nodes: &mut Vec<usize>, rng: &mut rng::Rng| {
        nodes.shuffle(rng);
        for &node in nodes.iter() {
            assignment[node] = pointer % k;
            pointer += 1;
        }
    };
    for class in 0..graph.num_classes {
        let mut nodes: Vec<usize> = (0..graph.num_nodes).filter(|&i| graph.labels[i] == Some(class)).collect();
        deal(&mut nodes, &mut rng);
    }
    let mut unlabeled: Vec<usize> = (0..graph.num_nodes).filter(|&i| graph.labels[i].is_none()).collect();
    deal(&mut unlabeled, &mut rng);
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut(graph: &MultimodalGraph, assignment: &[usize]) -> usize {
        graph.edges.iter().filter(|(u, v)| assignment[*u] != assignment[*v]).count()
    }

    #[test]
    fn balanced_path_splits_in_the_middle() {
        let g = MultimodalGraph::from_edges(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
        let a = assign_balanced(&g, 2, 0).unwrap();
        assert_eq!(a, vec![0, 0, 1, 1]);
        // Exhaustive: the minimum cut among balanced 2-partitions of P4 is 1.
        let best = (0u32..16)
            .filter(|mask| mask.count_ones() == 2)
            .map(|mask| {
                let asg: Vec<usize> = (0..4).map(|i| (mask >> i & 1) as usize).collect();
                cut(&g, &asg)
            })
            .min()
            .unwrap();
        assert_eq!(cut(&g, &a), best);
    }

    #[test]
    fn balanced_singletons_when_k_equals_n() {
        let g = MultimodalGraph::from_edges(5, vec![(0, 1), (1, 2), (3, 4)]).unwrap();
        let mut a = assign_balanced(&g, 5, 3).unwrap();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
        assert!(matches!(assign_balanced(&g, 6, 3), Err(Error::TooManyClients { .. })));
    }

    #[test]
    fn balanced_beats_random_cut() {
        for seed in 0..10 {
            let mut r = rng::rng_from_seed(seed);
            let mut edges = Vec::new();
            for u in 0..100 {
                for v in u + 1..100 {
                    if r.random::<f64>() < 0.05 {
                        edges.push((u, v));
                    }
                }
            }
            let g = MultimodalGraph::from_edges(100, edges).unwrap();
            let a = assign_balanced(&g, 4, seed).unwrap();
            let mut sizes = [0; 4];
            a.iter().for_each(|&c| sizes[c] += 1);
            assert_eq!(sizes, [25; 4]);
            // A uniformly random balanced 4-way split cuts each edge with probability
            // 1 - 24/99 (the partner must land in one of the 24 other same-client slots).
            let expected_random = g.num_edges() as f64 * (1.0 - 24.0 / 99.0);
            assert!((cut(&g, &a) as f64) <= expected_random, "seed {seed}");
        }
    }

    #[test]
    fn iid_deals_exact_counts() {
        let labels = (0..20).map(|i| Some(i % 2)).collect();
        let g = MultimodalGraph::from_edges(20, vec![]).unwrap().with_labels(labels, 2).unwrap();
        let a = assign_label_iid(&g, 5, 1).unwrap();
        for client in 0..5 {
            for class in 0..2 {
                let count = (0..20).filter(|&i| a[i] == client && i % 2 == class).count();
                assert_eq!(count, 2);
            }
        }
    }

    #[test]
    fn iid_counts_are_floor_or_ceil() {
        let mut labels = Vec::new();
        for (class, count) in [(0, 7), (1, 8), (2, 9)] {
            labels.extend(std::iter::repeat_n(Some(class), count));
        }
        let g = MultimodalGraph::from_edges(24, vec![]).unwrap().with_labels(labels.clone(), 3).unwrap();
        for seed in 0..10 {
            let a = assign_label_iid(&g, 4, seed).unwrap();
            for (class, n_c) in [(0usize, 7usize), (1, 8), (2, 9)] {
                for client in 0..4 {
                    let c = (0..24).filter(|&i| a[i] == client && labels[i] == Some(class)).count();
                    assert!(c == n_c / 4 || c == n_c.div_ceil(4), "class {class} client {client}: {c}");
                }
            }
        }
    }

    #[test]
    fn dirichlet_repairs_empty_clients() {
        let labels = (0..30).map(|i| Some(i % 3)).collect();
        let g = MultimodalGraph::from_edges(30, vec![]).unwrap().with_labels(labels, 3).unwrap();
        for seed in 0..20 {
            let a = assign_label_dirichlet(&g, 10, 0.01, seed).unwrap();
            for client in 0..10 {
                assert!(a.contains(&client), "seed {seed}: client {client} empty");
            }
        }
        assert!(matches!(
            assign_label_dirichlet(&g, 31, 1.0, 0),
            Err(Error::TooManyClients { .. })
        ));
    }

    #[test]
    fn louvain_assignment_single_client() {
        let g = MultimodalGraph::from_edges(5, vec![(0, 1), (2, 3)]).unwrap();
        assert_eq!(assign_louvain(&g, 1).unwrap(), vec![0; 5]);
    }

    #[test]
    fn louvain_two_triangles_two_clients() {
        let g = MultimodalGraph::from_edges(6, vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        assert_eq!(assign_louvain(&g, 2).unwrap(), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn louvain_splits_when_communities_are_scarce() {
        let g = MultimodalGraph::from_edges(6, vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let a = assign_louvain(&g, 4).unwrap();
        for client in 0..4 {
            assert!(a.contains(&client));
        }
    }
}

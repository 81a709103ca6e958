//! Modality-axis transforms.

use rand::seq::SliceRandom;
use rand::Rng;

use super::dirichlet::sample_symmetric;
use crate::error::{Error, Result};
use crate::graph::ClientShard;
use crate::rng;

/// Per client, draw `rho ~ Dirichlet(beta · 1_M)` and keep each present
/// `(node, modality)` with probability `min(1, M · rho_m)`.
pub fn apply_modality_noniid(shards: &[ClientShard], beta: f64, seed: u64) -> Result<Vec<ClientShard>> {
    let m = shards.first().map_or(0, |s| s.graph.num_modalities());
    if m < 2 {
        return Err(Error::InvalidParam(format!(
            "modality non-IID needs at least 2 modalities, got {m}"
        )));
    }
    shards
        .iter()
        .map(|shard| {
            let mut rng = rng::rng_from_seed(rng::derive_seed_indexed(seed, "modality-noniid", shard.client_id as u64));
            let rho = sample_symmetric(beta, m, &mut rng)?;
            Ok(mask_with_proportions(shard, &rho, &mut rng))
        })
        .collect()
}

/// Bernoulli retention per `(node, modality)` with `min(1, M · rho_m)`. A node
/// left with no modality gets back the one with the largest `rho`.
pub fn mask_with_proportions(shard: &ClientShard, rho: &[f64], rng: &mut rng::Rng) -> ClientShard {
    let m = rho.len();
    let fallback = (0..m)
        .max_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(b.cmp(&a)))
        .expect("at least one modality");
    let mut out = shard.clone();
    let g = &mut out.graph;
    for i in 0..g.num_nodes {
        let mut keep: Vec<bool> = (0..m)
            .map(|j| {
                let retain = (m as f64 * rho[j]).min(1.0);
                let draw = rng.random::<f64>() < retain;
                g.modality_mask[[i, j]] && draw
            })
            .collect();
        if !keep.iter().any(|&k| k) && g.modality_mask[[i, fallback]] {
            keep[fallback] = true;
        } else if !keep.iter().any(|&k| k) {
            // Fallback modality was already missing; restore whichever was present.
            if let Some(j) = (0..m).find(|&j| g.modality_mask[[i, j]]) {
                keep[j] = true;
            }
        }
        for (j, &k) in keep.iter().enumerate() {
            if !k && g.modality_mask[[i, j]] {
                g.mask_out(i, j);
            }
        }
    }
    out
}

/// Mask `target` on exactly `round(rate · n_k)` nodes per client. The chosen
/// nodes are a prefix of a per-client permutation, so higher rates mask supersets.
pub fn apply_missing_rate(shards: &[ClientShard], target: &str, rate: f64, seed: u64) -> Result<Vec<ClientShard>> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidParam(format!("missing rate {rate} outside [0, 1]")));
    }
    shards
        .iter()
        .map(|shard| {
            let modality = shard.graph.modality_index(target)?;
            let mut out = shard.clone();
            let n = out.graph.num_nodes;
            let count = (rate * n as f64).round() as usize;
            if count == 0 {
                return Ok(out);
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::rng_from_seed(rng::derive_seed_indexed(
                seed,
                "missing-rate",
                shard.client_id as u64,
            )));
            for &i in &order[..count] {
                out.graph.mask_out(i, modality);
            }
            Ok(out)
        })
        .collect()
}

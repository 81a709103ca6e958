use super::TopologyAxis;
use crate::error::{Error, Result};
use crate::graph::ClientShard;
use crate::rng;
use crate::synth::reconstruct_topology;

/// Available keeps induced edges; Unavailable swaps in a label-driven reconstruction.
pub fn apply_topology_axis(shards: &[ClientShard], axis: &TopologyAxis, seed: u64) -> Result<Vec<ClientShard>> {
    match axis {
        TopologyAxis::Available => Ok(shards.to_vec()),
        TopologyAxis::Unavailable { method, fit } => shards
            .iter()
            .map(|shard| {
                let labels: Vec<usize> = shard
                    .graph
                    .labels
                    .iter()
                    .map(|l| l.ok_or(Error::MissingLabels))
                    .collect::<Result<_>>()?;
                let edges = reconstruct_topology(
                    &labels,
                    *method,
                    fit,
                    rng::derive_seed_indexed(seed, "topology", shard.client_id as u64),
                )?;
                let mut out = shard.clone();
                out.graph = shard.graph.with_edges(edges)?;
                Ok(out)
            })
            .collect(),
    }
}

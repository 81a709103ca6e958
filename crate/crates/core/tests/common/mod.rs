#![allow(dead_code)]

use mmfgl::graph::{Modality, MultimodalGraph};
use mmfgl::nn::{Architecture, Batch, Fusion, Model, ModelSpec};
use mmfgl::synth::{generate_dataset, DatasetSpec};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random two-modality graph with labels and a partially missing modality.
pub fn small_graph(n: usize, seed: u64) -> MultimodalGraph {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < 0.2 {
                edges.push((u, v));
            }
        }
    }
    let dims = [5, 3];
    let features: Vec<Array2<f32>> = dims
        .iter()
        .map(|&d| Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0f32)))
        .collect();
    let labels = (0..n).map(|_| Some(r.random_range(0..3))).collect();
    let mut g = MultimodalGraph::from_edges(n, edges)
        .unwrap()
        .with_features(vec![Modality::new("text", 5), Modality::new("image", 3)], features)
        .unwrap()
        .with_labels(labels, 3)
        .unwrap();
    for i in 0..n {
        if r.random::<f64>() < 0.2 {
            g.mask_out(i, 1);
        }
    }
    g
}

pub fn spec(graph: &MultimodalGraph, architecture: Architecture, layers: usize, fusion: Fusion) -> ModelSpec {
    let mut s = ModelSpec::for_graph(graph, architecture, &[], 4, layers).unwrap();
    s.fusion = fusion;
    s.recon_head = true;
    s
}

pub fn batch(graph: &MultimodalGraph, seed: u64) -> Batch {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x55);
    let train = (0..graph.num_nodes).map(|_| r.random::<f64>() < 0.7).collect();
    Batch::new(graph, train)
}

pub fn all_models(graph: &MultimodalGraph) -> Vec<Model> {
    vec![
        Model::new(spec(graph, Architecture::Mlp, 2, Fusion::Mean)).unwrap(),
        Model::new(spec(graph, Architecture::Gcn, 2, Fusion::Mean)).unwrap(),
        Model::new(spec(graph, Architecture::Mmgcn, 2, Fusion::Mean)).unwrap(),
        Model::new(spec(graph, Architecture::Mmgcn, 3, Fusion::Concat)).unwrap(),
    ]
}

/// Homophilous SBM with two class-informative modalities.
pub fn sbm_dataset(blocks: Vec<usize>, intra_p: f64, inter_p: f64, separation: f32, seed: u64) -> MultimodalGraph {
    generate_dataset(&DatasetSpec {
        block_sizes: blocks,
        intra_p,
        inter_p,
        modalities: vec![Modality::new("text", 8), Modality::new("image", 8)],
        separation,
        sigma: 1.0,
        informative_modalities: vec![0, 1],
        seed,
    })
    .unwrap()
}

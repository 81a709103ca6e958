//! Synthetic multimodal-attributed graphs.
//!
//! Topology comes from a stochastic block model or a random dot product
//! graph; features are class-conditioned isotropic Gaussians per modality.
//! The same generators rebuild client topology in the topology-unavailable
//! scenario.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Modality, MultimodalGraph};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub block_sizes: Vec<usize>,
    pub intra_p: f64,
    pub inter_p: f64,
    pub seed: u64,
}

impl SbmParams {
    /// `inter_p > intra_p` is legal (heterophilous SBM) but usually a config slip.
    pub fn is_heterophilous(&self) -> bool {
        self.inter_p > self.intra_p
    }

    fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::InvalidParam("SBM blocks must be nonempty".into()));
        }
        for p in [self.intra_p, self.inter_p] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(format!("SBM probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sample every unordered pair independently with `prob(u, v)`.
fn sample_pairs(n: usize, rng: &mut rng::Rng, prob: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = prob(u, v);
            if p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Topology plus block labels; no modalities.
pub fn generate_sbm(params: &SbmParams) -> Result<MultimodalGraph> {
    params.validate()?;
    let labels: Vec<usize> = params
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let mut rng = rng::rng_from_seed(params.seed);
    let edges = sample_pairs(labels.len(), &mut rng, |u, v| {
        if labels[u] == labels[v] {
            params.intra_p
        } else {
            params.inter_p
        }
    });
    MultimodalGraph::from_edges(labels.len(), edges)?
        .with_labels(labels.into_iter().map(Some).collect(), params.block_sizes.len())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdpgParams {
    pub latent_dim: usize,
    /// `n × latent_dim`, entries in `[0, 1]`.
    pub latent_positions: Array2<f64>,
    pub seed: u64,
}

/// Edge `(u, v)` with probability `clip(x_u · x_v, 0, 1)`. Unlabeled.
pub fn generate_rdpg(params: &RdpgParams) -> Result<MultimodalGraph> {
    let x = &params.latent_positions;
    if x.ncols() != params.latent_dim {
        return Err(Error::DimensionMismatch {
            what: "RDPG latent positions".into(),
            expected: params.latent_dim,
            found: x.ncols(),
        });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidParam("RDPG latent positions must lie in [0, 1]".into()));
    }
    let mut rng = rng::rng_from_seed(params.seed);
    let edges = sample_pairs(x.nrows(), &mut rng, |u, v| x.row(u).dot(&x.row(v)).clamp(0.0, 1.0));
    MultimodalGraph::from_edges(x.nrows(), edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSynthParams {
    pub modalities: Vec<Modality>,
    /// `means[class][modality]` has length `modalities[modality].feature_dim`.
    pub means: Vec<Vec<Vec<f32>>>,
    pub sigma: f32,
    pub informative_modalities: Vec<usize>,
}

impl FeatureSynthParams {
    /// Random class means of norm `separation` on informative modalities, zero elsewhere.
    pub fn class_separated(
        modalities: Vec<Modality>,
        num_classes: usize,
        separation: f32,
        sigma: f32,
        informative_modalities: Vec<usize>,
        seed: u64,
    ) -> Self {
        let mut rng = rng::rng_from_seed(seed);
        let means = (0..num_classes)
            .map(|_| {
                modalities
                    .iter()
                    .enumerate()
                    .map(|(m, modality)| {
                        let dim = modality.feature_dim;
                        if !informative_modalities.contains(&m) {
                            return vec![0.0; dim];
                        }
                        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(f32::EPSILON);
                        v.into_iter().map(|x| x * separation / norm).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            modalities,
            means,
            sigma,
            informative_modalities,
        }
    }

    fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParam(format!("feature sigma must be positive, got {}", self.sigma)));
        }
        if self.means.len() < num_classes {
            return Err(Error::DimensionMismatch {
                what: "class means".into(),
                expected: num_classes,
                found: self.means.len(),
            });
        }
        for per_class in &self.means {
            if per_class.len() != self.modalities.len() {
                return Err(Error::DimensionMismatch {
                    what: "modality means".into(),
                    expected: self.modalities.len(),
                    found: per_class.len(),
                });
            }
            for (mean, modality) in per_class.iter().zip(&self.modalities) {
                if mean.len() != modality.feature_dim {
                    return Err(Error::DimensionMismatch {
                        what: format!("mean of modality {}", modality.name),
                        expected: modality.feature_dim,
                        found: mean.len(),
                    });
                }
            }
        }
        if let Some(&bad) = self.informative_modalities.iter().find(|&&m| m >= self.modalities.len()) {
            return Err(Error::InvalidParam(format!("informative modality index {bad} out of range")));
        }
        Ok(())
    }
}

/// Attach Gaussian features: row `(i, m)` ~ N(means[y_i][m], sigma² I). All modalities present.
pub fn synthesize_features(graph: &MultimodalGraph, params: &FeatureSynthParams, seed: u64) -> Result<MultimodalGraph> {
    let labels = graph.dense_labels()?;
    params.validate(graph.num_classes)?;
    let mut rng = rng::rng_from_seed(seed);
    let features = params
        .modalities
        .iter()
        .enumerate()
        .map(|(m, modality)| {
            let mut feats = Array2::<f32>::zeros((graph.num_nodes, modality.feature_dim));
            for (i, mut row) in feats.rows_mut().into_iter().enumerate() {
                let mean = &params.means[labels[i]][m];
                for (x, &mu) in row.iter_mut().zip(mean) {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    *x = mu + params.sigma * z;
                }
            }
            feats
        })
        .collect();
    graph.clone().with_features(params.modalities.clone(), features)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconstructionMethod {
    Sbm,
    Rdpg,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitParams {
    pub intra_p: f64,
    pub inter_p: f64,
    /// Uniform noise added to RDPG latent coordinates.
    pub noise: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            intra_p: 0.1,
            inter_p: 0.01,
            noise: 0.05,
        }
    }
}

/// Latent positions whose class-level dot products are `intra_p` (same class)
/// and `inter_p` (different class) before noise: `x = a·e_y + b·1/√C + u`.
fn rdpg_positions(labels: &[usize], fit: &FitParams, rng: &mut rng::Rng) -> Array2<f64> {
    let num_classes = labels.iter().max().map_or(1, |&c| c + 1);
    let c = num_classes as f64;
    let inter = fit.inter_p.min(fit.intra_p).max(0.0);
    let a = (fit.intra_p.max(0.0) - inter).sqrt();
    let b = -a / c.sqrt() + (a * a / c + inter).sqrt();
    let mut x = Array2::from_elem((labels.len(), num_classes), b / c.sqrt());
    for (i, &y) in labels.iter().enumerate() {
        x[[i, y]] += a;
        for v in x.row_mut(i) {
            *v = (*v + fit.noise * rng.random::<f64>()).clamp(0.0, 1.0);
        }
    }
    x
}

/// Fresh canonical edge list over a shard's nodes, driven only by labels.
pub fn reconstruct_topology(
    labels: &[usize],
    method: ReconstructionMethod,
    fit: &FitParams,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if labels.len() < 2 {
        return Ok(Vec::new());
    }
    let mut rng = rng::rng_from_seed(seed);
    let edges = match method {
        ReconstructionMethod::Sbm => sample_pairs(labels.len(), &mut rng, |u, v| {
            if labels[u] == labels[v] {
                fit.intra_p
            } else {
                fit.inter_p
            }
        }),
        ReconstructionMethod::Rdpg => {
            let x = rdpg_positions(labels, fit, &mut rng);
            sample_pairs(labels.len(), &mut rng, |u, v| x.row(u).dot(&x.row(v)).clamp(0.0, 1.0))
        }
    };
    crate::graph::canonical_edges(labels.len(), &edges)
}

/// Everything needed to synthesize a labeled multimodal SBM dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub block_sizes: Vec<usize>,
    pub intra_p: f64,
    pub inter_p: f64,
    pub modalities: Vec<Modality>,
    /// Norm of each informative class mean.
    pub separation: f32,
    pub sigma: f32,
    pub informative_modalities: Vec<usize>,
    pub seed: u64,
}

/// SBM topology with block labels plus class-conditioned Gaussian features.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<MultimodalGraph> {
    let graph = generate_sbm(&SbmParams {
        block_sizes: spec.block_sizes.clone(),
        intra_p: spec.intra_p,
        inter_p: spec.inter_p,
        seed: rng::derive_seed(spec.seed, "topology"),
    })?;
    let params = FeatureSynthParams::class_separated(
        spec.modalities.clone(),
        spec.block_sizes.len(),
        spec.separation,
        spec.sigma,
        spec.informative_modalities.clone(),
        rng::derive_seed(spec.seed, "means"),
    );
    synthesize_features(&graph, &params, rng::derive_seed(spec.seed, "features"))
}

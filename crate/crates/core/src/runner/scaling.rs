use std::collections::HashSet;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{Algorithm, FedConfig, Federation, Task};
use crate::graph::{Modality, MultimodalGraph};
use crate::nn::{Architecture, Model, ModelSpec, OptimizerConfig};
use crate::partition::partition_label_iid;
use crate::rng;

/// Symbolic per-round cost terms of one client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Propagation layers `K`.
    pub layers: usize,
    pub n: usize,
    pub m: usize,
    /// Input feature width.
    pub f: usize,
    pub h: usize,
    /// Output width.
    pub out: usize,
    /// Sparse-matrix constructions per run.
    pub q: usize,
    pub local_epochs: usize,
}

impl CostModel {
    pub fn new(spec: &ModelSpec, n: usize, m: usize, local_epochs: usize) -> Self {
        Self {
            layers: spec.num_layers,
            n,
            m,
            f: spec.input_width(),
            h: spec.hidden,
            out: spec.out,
            q: 1,
            local_epochs,
        }
    }

    /// `E · (K·m·w + n·w²)` with `w = max(f, h)`.
    pub fn predicted_ops(&self) -> f64 {
        let w = self.f.max(self.h) as f64;
        self.local_epochs as f64 * (self.layers as f64 * self.m as f64 * w + self.n as f64 * w * w)
    }

    pub fn time_class(algorithm: Algorithm) -> &'static str {
        match algorithm {
            Algorithm::FedProto => "O(Kmf + nf² + nCh)",
            _ => "O(Kmf + nf²)",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingAxis {
    N,
    M,
    F,
}

/// Grid over one of `n`, `m`, `f`; the other two stay at the fixed values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingGrid {
    pub axis: ScalingAxis,
    pub values: Vec<usize>,
    pub n: usize,
    pub m: usize,
    pub f: usize,
    pub layers: usize,
    /// Timed rounds per point; the minimum is kept.
    pub repeats: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub x: usize,
    pub seconds: f64,
    pub cost: CostModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub axis: ScalingAxis,
    pub points: Vec<ScalingPoint>,
    pub slope: f64,
    /// Half-width of the 95% interval on the slope.
    pub ci95: f64,
}

/// Least-squares slope of `ln y` on `ln x` and its 95% half-width.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, 0.0);
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    if lx.len() < 3 {
        return (slope, f64::INFINITY);
    }
    let ssr: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, 1.96 * (ssr / (k - 2.0) / sxx).sqrt())
}

/// `m` distinct random edges and Gaussian features of width `f` on `n` nodes.
pub fn random_graph(n: usize, m: usize, f: usize, classes: usize, seed: u64) -> Result<MultimodalGraph> {
    if n < 2 || m > n * (n - 1) / 2 {
        return Err(Error::InvalidParam(format!("cannot place {m} edges on {n} nodes")));
    }
    let mut r = rng::rng_from_seed(seed);
    let mut edges = HashSet::with_capacity(m);
    while edges.len() < m {
        let u = r.random_range(0..n);
        let v = r.random_range(0..n);
        if u != v {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    let x = Array2::from_shape_fn((n, f), |_| StandardNormal.sample(&mut r));
    let labels = (0..n).map(|_| Some(r.random_range(0..classes))).collect();
    MultimodalGraph::from_edges(n, edges.into_iter().collect())?
        .with_features(vec![Modality::new("x", f)], vec![x])?
        .with_labels(labels, classes)
}

fn time_point(algorithm: Algorithm, n: usize, m: usize, f: usize, grid: &ScalingGrid) -> Result<ScalingPoint> {
    let graph = random_graph(n, m, f, 4, rng::derive_seed_indexed(grid.seed, "scaling", (n ^ m ^ f) as u64))?;
    let shards = partition_label_iid(&graph, 1, grid.seed)?.shards;
    let spec = ModelSpec::for_graph(&graph, Architecture::Gcn, &[], f, grid.layers)?;
    let cost = CostModel::new(&spec, n, m, 1);
    let config = FedConfig {
        algorithm,
        rounds: grid.repeats,
        local_epochs: 1,
        ..FedConfig::default()
    };
    let mut fed = Federation::new(
        Model::new(spec)?,
        shards,
        Task::NodeClassification,
        config,
        OptimizerConfig::default(),
        grid.seed,
    )?;
    fed.run_round()?;
    let mut best = f64::INFINITY;
    for _ in 0..grid.repeats {
        let start = Instant::now();
        fed.run_round()?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    let x = match grid.axis {
        ScalingAxis::N => n,
        ScalingAxis::M => m,
        ScalingAxis::F => f,
    };
    Ok(ScalingPoint { x, seconds: best, cost })
}

/// Time single-client rounds along the grid and fit a log-log slope.
///
/// The hidden width follows `f`, so the dense transform costs `n·f²`.
pub fn measure_scaling(algorithm: Algorithm, grid: &ScalingGrid) -> Result<ScalingResult> {
    if grid.values.len() < 3 {
        return Err(Error::InvalidParam(format!("scaling grid needs at least 3 points, got {}", grid.values.len())));
    }
    if grid.repeats == 0 || grid.layers == 0 || grid.values.contains(&0) {
        return Err(Error::InvalidParam("repeats, layers and grid values must be positive".into()));
    }
    let points = grid
        .values
        .iter()
        .map(|&v| match grid.axis {
            ScalingAxis::N => time_point(algorithm, v, grid.m, grid.f, grid),
            ScalingAxis::M => time_point(algorithm, grid.n, v, grid.f, grid),
            ScalingAxis::F => time_point(algorithm, grid.n, grid.m, v, grid),
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.x as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.seconds.max(1e-9)).collect();
    let (slope, ci95) = loglog_slope(&x, &y);
    Ok(ScalingResult {
        axis: grid.axis,
        points,
        slope,
        ci95,
    })
}

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::params::{matrix, Layout, ParamVector};
use super::sparse::{normalize_adjacency, SparseMatrix};
use crate::error::{Error, Result};
use crate::graph::MultimodalGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Mlp,
    Gcn,
    /// One GCN branch per modality, fused, then a shared GCN head.
    Mmgcn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Concat,
    #[default]
    Mean,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Graph modality indices fed to the model.
    pub modalities: Vec<usize>,
    /// Feature width of each entry in `modalities`.
    pub input_dims: Vec<usize>,
    pub hidden: usize,
    pub out: usize,
    pub num_layers: usize,
    pub fusion: Fusion,
    /// Adds a linear decoder from the embedding back to the input features.
    pub recon_head: bool,
}

impl ModelSpec {
    /// Spec over the named modalities of `graph` (all of them when `names` is empty).
    pub fn for_graph(
        graph: &MultimodalGraph,
        architecture: Architecture,
        names: &[String],
        hidden: usize,
        num_layers: usize,
    ) -> Result<Self> {
        let modalities = if names.is_empty() {
            (0..graph.num_modalities()).collect()
        } else {
            names.iter().map(|n| graph.modality_index(n)).collect::<Result<Vec<_>>>()?
        };
        let input_dims = modalities.iter().map(|&m| graph.modalities[m].feature_dim).collect();
        Ok(Self {
            architecture,
            modalities,
            input_dims,
            hidden,
            out: graph.num_classes,
            num_layers,
            fusion: Fusion::Mean,
            recon_head: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(format!("model spec: {msg}")));
        if self.modalities.is_empty() || self.modalities.len() != self.input_dims.len() {
            return bad("modalities and input_dims must be nonempty and aligned");
        }
        if self.input_dims.contains(&0) || self.hidden == 0 || self.out == 0 || self.num_layers == 0 {
            return bad("dimensions and layer count must be positive");
        }
        if self.architecture == Architecture::Mmgcn && self.num_layers < 2 {
            return bad("mmgcn needs at least two layers");
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.input_dims.iter().sum()
    }

    /// Width of the embedding fed to the final layer.
    pub fn embed_dim(&self) -> usize {
        match self.architecture {
            _ if self.num_layers == 1 => self.input_width(),
            Architecture::Mmgcn if self.fusion == Fusion::Concat => self.hidden * self.modalities.len(),
            _ => self.hidden,
        }
    }
}

/// Full-graph inputs for one forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    pub adjacency: SparseMatrix,
    /// One matrix per graph modality; rows of absent modalities are zero.
    pub features: Vec<Array2<f64>>,
    pub mask: Array2<bool>,
    pub labels: Vec<Option<usize>>,
    pub train_mask: Vec<bool>,
}

impl Batch {
    pub fn new(graph: &MultimodalGraph, train_mask: Vec<bool>) -> Self {
        let features = graph
            .features
            .iter()
            .enumerate()
            .map(|(m, x)| {
                let mut out = x.mapv(f64::from);
                for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                    if !graph.modality_mask[[i, m]] {
                        row.fill(0.0);
                    }
                }
                out
            })
            .collect();
        Self {
            adjacency: normalize_adjacency(graph),
            features,
            mask: graph.modality_mask.clone(),
            labels: graph.labels.clone(),
            train_mask,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.n
    }

    /// Copy with every input row of `nodes` zeroed.
    pub fn with_zeroed_rows(&self, nodes: &[usize]) -> Self {
        let mut out = self.clone();
        for x in &mut out.features {
            for &i in nodes {
                x.row_mut(i).fill(0.0);
            }
        }
        out
    }
}

struct LayerCache {
    /// Propagated layer input.
    input: Array2<f64>,
    /// Pre-activation; `None` for linear layers.
    pre: Option<Array2<f64>>,
}

/// Forward activations needed by [`Model::backward`].
pub struct Forward {
    pub logits: Array2<f64>,
    /// Input to the final layer.
    pub embedding: Array2<f64>,
    /// Per-stack outputs before fusion.
    pub branches: Vec<Array2<f64>>,
    stacks: Vec<Vec<LayerCache>>,
    head: LayerCache,
    fusion_weights: Option<Array2<f64>>,
}

impl Forward {
    /// Sign pattern of every ReLU pre-activation.
    pub fn activation_pattern(&self) -> Vec<bool> {
        self.stacks
            .iter()
            .flatten()
            .filter_map(|c| c.pre.as_ref())
            .flat_map(|z| z.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Gradients of a loss with respect to forward outputs.
#[derive(Default)]
pub struct OutputGrads {
    pub logits: Option<Array2<f64>>,
    pub embedding: Option<Array2<f64>>,
    pub branches: Vec<Option<Array2<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    layout: Layout,
    stacks: Vec<Vec<String>>,
    head: String,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut layout = Layout::new();
        let mut stacks = Vec::new();
        let depth = spec.num_layers - 1;
        let head = match spec.architecture {
            Architecture::Mlp | Architecture::Gcn => {
                let mut names = Vec::new();
                let mut width = spec.input_width();
                for l in 0..depth {
                    let name = format!("layer{l}");
                    layout.push(format!("{name}.w"), width, spec.hidden);
                    layout.push(format!("{name}.b"), 1, spec.hidden);
                    names.push(name);
                    width = spec.hidden;
                }
                stacks.push(names);
                format!("layer{depth}")
            }
            Architecture::Mmgcn => {
                for (m, &dim) in spec.input_dims.iter().enumerate() {
                    let mut names = Vec::new();
                    let mut width = dim;
                    for l in 0..depth {
                        let name = format!("branch{m}.layer{l}");
                        layout.push(format!("{name}.w"), width, spec.hidden);
                        layout.push(format!("{name}.b"), 1, spec.hidden);
                        names.push(name);
                        width = spec.hidden;
                    }
                    stacks.push(names);
                }
                "head".to_string()
            }
        };
        layout.push(format!("{head}.w"), spec.embed_dim(), spec.out);
        layout.push(format!("{head}.b"), 1, spec.out);
        if spec.recon_head {
            layout.push("recon.w", spec.embed_dim(), spec.input_width());
            layout.push("recon.b", 1, spec.input_width());
        }
        Ok(Self {
            spec,
            layout,
            stacks,
            head,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.layout.len()
    }

    pub fn init(&self, seed: u64) -> ParamVector {
        ParamVector::glorot(self.layout.clone(), seed)
    }

    /// Segment indices belonging to the final layer.
    pub fn head_segments(&self) -> Vec<usize> {
        let prefix = format!("{}.", self.head);
        self.layout
            .segments()
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.name.starts_with(&prefix).then_some(i))
            .collect()
    }

    fn propagate(&self, batch: &Batch, h: &Array2<f64>) -> Array2<f64> {
        match self.spec.architecture {
            Architecture::Mlp => h.clone(),
            _ => batch.adjacency.matmul(h.view()),
        }
    }

    fn check_batch(&self, theta: &[f64], batch: &Batch) -> Result<()> {
        if theta.len() != self.layout.len() {
            return Err(Error::DimensionMismatch {
                what: "parameters".into(),
                expected: self.layout.len(),
                found: theta.len(),
            });
        }
        for (&m, &dim) in self.spec.modalities.iter().zip(&self.spec.input_dims) {
            let x = batch.features.get(m).ok_or_else(|| Error::DimensionMismatch {
                what: "batch modalities".into(),
                expected: m + 1,
                found: batch.features.len(),
            })?;
            if x.ncols() != dim || x.nrows() != batch.num_nodes() {
                return Err(Error::DimensionMismatch {
                    what: format!("features of modality {m}"),
                    expected: dim,
                    found: x.ncols(),
                });
            }
        }
        Ok(())
    }

    fn layer(&self, theta: &[f64], batch: &Batch, name: &str, h: &Array2<f64>, relu: bool) -> (LayerCache, Array2<f64>) {
        let input = self.propagate(batch, h);
        let w = matrix(&self.layout, theta, &format!("{name}.w"));
        let b = matrix(&self.layout, theta, &format!("{name}.b"));
        let z = input.dot(&w) + &b.row(0);
        if relu {
            let out = z.mapv(|v| v.max(0.0));
            (LayerCache { input, pre: Some(z) }, out)
        } else {
            (LayerCache { input, pre: None }, z)
        }
    }

    fn stack_inputs(&self, batch: &Batch) -> Vec<Array2<f64>> {
        let xs: Vec<_> = self.spec.modalities.iter().map(|&m| batch.features[m].view()).collect();
        match self.spec.architecture {
            Architecture::Mmgcn => xs.iter().map(|x| x.to_owned()).collect(),
            _ => vec![concatenate(Axis(1), &xs).expect("aligned rows")],
        }
    }

    pub fn forward(&self, theta: &[f64], batch: &Batch) -> Result<Forward> {
        self.check_batch(theta, batch)?;
        let mut stacks = Vec::new();
        let mut branches = Vec::new();
        for (names, x) in self.stacks.iter().zip(self.stack_inputs(batch)) {
            let mut h = x;
            let mut caches = Vec::new();
            for name in names {
                let (cache, out) = self.layer(theta, batch, name, &h, true);
                caches.push(cache);
                h = out;
            }
            stacks.push(caches);
            branches.push(h);
        }
        let (embedding, fusion_weights) = self.fuse(batch, &branches);
        let (head, logits) = self.layer(theta, batch, &self.head, &embedding, false);
        Ok(Forward {
            logits,
            embedding,
            branches,
            stacks,
            head,
            fusion_weights,
        })
    }

    fn fuse(&self, batch: &Batch, branches: &[Array2<f64>]) -> (Array2<f64>, Option<Array2<f64>>) {
        if self.spec.architecture != Architecture::Mmgcn {
            return (branches[0].clone(), None);
        }
        let n = batch.num_nodes();
        let count = self.spec.modalities.len();
        let mut weights = Array2::zeros((n, count));
        for i in 0..n {
            let present: Vec<bool> = self.spec.modalities.iter().map(|&m| batch.mask[[i, m]]).collect();
            let k = present.iter().filter(|&&p| p).count();
            for (j, &p) in present.iter().enumerate() {
                if p {
                    weights[[i, j]] = match self.spec.fusion {
                        Fusion::Mean => 1.0 / k as f64,
                        Fusion::Concat => 1.0,
                    };
                }
            }
        }
        let h = self.spec.hidden;
        let fused = match self.spec.fusion {
            Fusion::Mean => {
                let mut out = Array2::zeros((n, h));
                for (j, z) in branches.iter().enumerate() {
                    out += &(z * &weights.column(j).insert_axis(Axis(1)));
                }
                out
            }
            Fusion::Concat => {
                let mut out = Array2::zeros((n, h * count));
                for (j, z) in branches.iter().enumerate() {
                    let block = z * &weights.column(j).insert_axis(Axis(1));
                    out.slice_mut(s![.., j * h..(j + 1) * h]).assign(&block);
                }
                out
            }
        };
        (fused, Some(weights))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient wrt the layer input.
    fn layer_backward(
        &self,
        theta: &[f64],
        batch: &Batch,
        name: &str,
        cache: &LayerCache,
        mut g: Array2<f64>,
        grad: &mut [f64],
        need_input: bool,
    ) -> Option<Array2<f64>> {
        if let Some(z) = &cache.pre {
            g.zip_mut_with(z, |gv, &zv| {
                if zv <= 0.0 {
                    *gv = 0.0;
                }
            });
        }
        let w_seg = self.layout.segment(&format!("{name}.w")).expect("weight segment");
        let b_seg = self.layout.segment(&format!("{name}.b")).expect("bias segment");
        let dw = cache.input.t().dot(&g);
        for (dst, src) in grad[w_seg.range()].iter_mut().zip(dw.iter()) {
            *dst += src;
        }
        for (dst, src) in grad[b_seg.range()].iter_mut().zip(g.sum_axis(Axis(0)).iter()) {
            *dst += src;
        }
        need_input.then(|| {
            let w = matrix(&self.layout, theta, &format!("{name}.w"));
            self.propagate(batch, &g.dot(&w.t()))
        })
    }

    /// Gradient of a loss wrt all parameters, given its gradients wrt forward outputs.
    pub fn backward(&self, theta: &[f64], batch: &Batch, fwd: &Forward, grads: OutputGrads) -> Vec<f64> {
        let mut grad = vec![0.0; self.layout.len()];
        let mut d_embed = grads.embedding.unwrap_or_else(|| Array2::zeros(fwd.embedding.raw_dim()));
        if let Some(g) = grads.logits {
            let d = self.layer_backward(theta, batch, &self.head, &fwd.head, g, &mut grad, true);
            d_embed += &d.expect("input gradient");
        }
        let mut d_branches: Vec<Array2<f64>> = match &fwd.fusion_weights {
            None => vec![d_embed],
            Some(weights) => {
                let h = self.spec.hidden;
                (0..self.stacks.len())
                    .map(|j| {
                        let col = weights.column(j).insert_axis(Axis(1));
                        match self.spec.fusion {
                            Fusion::Mean => &d_embed * &col,
                            Fusion::Concat => &d_embed.slice(s![.., j * h..(j + 1) * h]) * &col,
                        }
                    })
                    .collect()
            }
        };
        for (j, extra) in grads.branches.into_iter().enumerate() {
            if let Some(extra) = extra {
                d_branches[j] += &extra;
            }
        }
        for ((names, caches), mut g) in self.stacks.iter().zip(&fwd.stacks).zip(d_branches) {
            for (l, (name, cache)) in names.iter().zip(caches).enumerate().rev() {
                match self.layer_backward(theta, batch, name, cache, g, &mut grad, l > 0) {
                    Some(next) => g = next,
                    None => break,
                }
            }
        }
        grad
    }
}

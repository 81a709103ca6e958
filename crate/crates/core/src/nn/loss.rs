use std::collections::HashSet;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng as _;

use super::model::{Architecture, Batch, Model, OutputGrads};
use super::params::matrix;
use crate::error::{Error, Result};
use crate::rng;

/// Default InfoNCE temperature.
pub const TEMPERATURE: f64 = 0.07;

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

fn log_sum_exp(row: ndarray::ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy over masked nodes and its gradient wrt the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[Option<usize>], mask: &[bool]) -> Result<(f64, Array2<f64>)> {
    let rows: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput("classification mask"));
    }
    let count = rows.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for &i in &rows {
        let y = labels[i].ok_or(Error::MissingLabels)?;
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        loss += lse - row[y];
        for (c, g) in grad.row_mut(i).iter_mut().enumerate() {
            *g = ((row[c] - lse).exp() - if c == y { 1.0 } else { 0.0 }) / count;
        }
    }
    Ok((loss / count, grad))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy on `σ(z_u · z_v)`, positives labeled 1 and negatives 0.
pub fn link_bce(
    emb: &Array2<f64>,
    pos: &[(usize, usize)],
    neg: &[(usize, usize)],
) -> Result<(f64, Array2<f64>)> {
    if pos.is_empty() {
        return Err(Error::EmptyInput("positive edges"));
    }
    if pos.len() != neg.len() {
        return Err(Error::DimensionMismatch {
            what: "negative edge count".into(),
            expected: pos.len(),
            found: neg.len(),
        });
    }
    let total = (pos.len() + neg.len()) as f64;
    let mut grad = Array2::zeros(emb.raw_dim());
    let mut loss = 0.0;
    for (pairs, y) in [(pos, 1.0), (neg, 0.0)] {
        for &(u, v) in pairs {
            let s = emb.row(u).dot(&emb.row(v));
            loss += if y == 1.0 { softplus(-s) } else { softplus(s) };
            let ds = (sigmoid(s) - y) / total;
            let (zu, zv) = (emb.row(u).to_owned(), emb.row(v).to_owned());
            grad.row_mut(u).scaled_add(ds, &zv);
            grad.row_mut(v).scaled_add(ds, &zu);
        }
    }
    Ok((loss / total, grad))
}

/// `count` uniform non-edges `(u, v)` with `u < v`, drawn with replacement.
/// Returns fewer only when non-edges are too rare to find.
pub fn sample_negative_edges(
    num_nodes: usize,
    edges: &[(usize, usize)],
    count: usize,
    rng: &mut rng::Rng,
) -> Vec<(usize, usize)> {
    let existing: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let capacity = (num_nodes * num_nodes.saturating_sub(1) / 2).saturating_sub(existing.len());
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while capacity > 0 && out.len() < count && attempts < 100 * count + 1000 {
        attempts += 1;
        let u = rng.random_range(0..num_nodes);
        let v = rng.random_range(0..num_nodes);
        let pair = (u.min(v), u.max(v));
        if u != v && !existing.contains(&pair) {
            out.push(pair);
        }
    }
    out
}

/// Nodes whose inputs are hidden for masked reconstruction: `max(1, round(fraction · n))` of them.
pub fn reconstruction_nodes(num_nodes: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParam(format!("mask fraction {fraction} outside (0, 1)")));
    }
    if num_nodes == 0 {
        return Err(Error::EmptyInput("reconstruction nodes"));
    }
    let count = ((fraction * num_nodes as f64).round() as usize).max(1);
    let mut nodes = index::sample(&mut rng::rng_from_seed(seed), num_nodes, count).into_vec();
    nodes.sort_unstable();
    Ok(nodes)
}

/// Mean squared error over `rows`, normalized by row width.
pub fn masked_mse(pred: &Array2<f64>, target: &Array2<f64>, rows: &[usize]) -> Result<(f64, Array2<f64>)> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("reconstruction rows"));
    }
    let scale = (rows.len() * pred.ncols()) as f64;
    let mut grad = Array2::zeros(pred.raw_dim());
    let mut loss = 0.0;
    for &i in rows {
        for ((g, &p), &t) in grad.row_mut(i).iter_mut().zip(pred.row(i)).zip(target.row(i)) {
            loss += (p - t) * (p - t);
            *g = 2.0 * (p - t) / scale;
        }
    }
    Ok((loss / scale, grad))
}

const NORM_EPS: f64 = 1e-12;

fn normalize_rows(z: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let norms: Vec<f64> = z.rows().into_iter().map(|r| (r.dot(&r) + NORM_EPS).sqrt()).collect();
    let mut u = z.clone();
    for (mut row, &n) in u.rows_mut().into_iter().zip(&norms) {
        row /= n;
    }
    (u, norms)
}

fn normalize_backward(u: &Array2<f64>, norms: &[f64], du: &Array2<f64>) -> Array2<f64> {
    let mut dz = du.clone();
    for (i, mut row) in dz.rows_mut().into_iter().enumerate() {
        let proj = u.row(i).dot(&du.row(i));
        row.scaled_add(-proj, &u.row(i));
        row /= norms[i];
    }
    dz
}

/// Symmetric InfoNCE between row-aligned embeddings; returns gradients wrt both inputs.
pub fn info_nce(za: &Array2<f64>, zb: &Array2<f64>, temperature: f64) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let n = za.nrows();
    if n < 2 {
        return Err(Error::InvalidParam(format!("contrastive batch of {n} rows")));
    }
    if zb.nrows() != n || zb.ncols() != za.ncols() {
        return Err(Error::DimensionMismatch {
            what: "contrastive pair".into(),
            expected: n,
            found: zb.nrows(),
        });
    }
    if temperature <= 0.0 {
        return Err(Error::InvalidParam(format!("temperature {temperature}")));
    }
    let (ua, na) = normalize_rows(za);
    let (ub, nb) = normalize_rows(zb);
    let sim = ua.dot(&ub.t()) / temperature;
    let sim_t = sim.t().to_owned();
    let mut loss = 0.0;
    for i in 0..n {
        loss += log_sum_exp(sim.row(i)) - sim[[i, i]];
        loss += log_sum_exp(sim_t.row(i)) - sim[[i, i]];
    }
    loss /= 2.0 * n as f64;
    let eye = Array2::<f64>::eye(n);
    let d_sim = ((softmax_rows(&sim) - &eye) + (softmax_rows(&sim_t) - &eye).t()) / (2.0 * n as f64);
    let dua = d_sim.dot(&ub) / temperature;
    let dub = d_sim.t().dot(&ua) / temperature;
    Ok((loss, normalize_backward(&ua, &na, &dua), normalize_backward(&ub, &nb, &dub)))
}

/// A differentiable training objective over one [`Batch`].
#[derive(Clone, Debug)]
pub enum Objective {
    /// Cross-entropy on the batch's training nodes.
    Classification,
    /// Link BCE on embeddings.
    Link {
        pos: Vec<(usize, usize)>,
        neg: Vec<(usize, usize)>,
    },
    /// Zero the inputs of `nodes`, decode them from embeddings, MSE on those rows.
    Reconstruction { nodes: Vec<usize> },
    /// InfoNCE between two branch outputs over `rows`.
    Contrastive {
        branches: (usize, usize),
        rows: Vec<usize>,
        temperature: f64,
    },
    /// `λ · mean ‖z_i − p_{y_i}‖²` over training nodes whose class has a prototype.
    Prototype {
        prototypes: Array2<f64>,
        present: Vec<bool>,
        lambda: f64,
    },
    /// MSE between outputs and a dense target.
    Regression { target: Array2<f64> },
    Sum(Vec<(f64, Objective)>),
}

impl Objective {
    pub fn masked_reconstruction(num_nodes: usize, fraction: f64, seed: u64) -> Result<Self> {
        Ok(Self::Reconstruction {
            nodes: reconstruction_nodes(num_nodes, fraction, seed)?,
        })
    }

    /// Contrastive objective over nodes where both modalities are present.
    pub fn contrastive(model: &Model, batch: &Batch, temperature: f64) -> Result<Self> {
        let spec = model.spec();
        if spec.architecture != Architecture::Mmgcn || spec.modalities.len() < 2 {
            return Err(Error::InvalidParam("contrastive objective needs a two-branch model".into()));
        }
        let (a, b) = (spec.modalities[0], spec.modalities[1]);
        let rows = (0..batch.num_nodes())
            .filter(|&i| batch.mask[[i, a]] && batch.mask[[i, b]])
            .collect();
        Ok(Self::Contrastive {
            branches: (0, 1),
            rows,
            temperature,
        })
    }
}

impl Model {
    /// Loss value and flat gradient for `objective`.
    pub fn loss_and_grad(&self, theta: &[f64], batch: &Batch, objective: &Objective) -> Result<(f64, Vec<f64>)> {
        self.evaluate(theta, batch, objective, true).map(|(l, g, _)| (l, g.expect("gradient requested")))
    }

    /// Loss value and ReLU activation pattern, without gradients.
    pub fn loss_value(&self, theta: &[f64], batch: &Batch, objective: &Objective) -> Result<(f64, Vec<bool>)> {
        self.evaluate(theta, batch, objective, false).map(|(l, _, p)| (l, p))
    }

    fn evaluate(
        &self,
        theta: &[f64],
        batch: &Batch,
        objective: &Objective,
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>, Vec<bool>)> {
        if let Objective::Sum(parts) = objective {
            let mut total = 0.0;
            let mut grad = want_grad.then(|| vec![0.0; theta.len()]);
            let mut pattern = Vec::new();
            for (weight, part) in parts {
                let (l, g, p) = self.evaluate(theta, batch, part, want_grad)?;
                total += weight * l;
                if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                    acc.iter_mut().zip(g).for_each(|(a, b)| *a += weight * b);
                }
                pattern.extend(p);
            }
            return Ok((total, grad, pattern));
        }
        let masked;
        let input = match objective {
            Objective::Reconstruction { nodes } => {
                masked = batch.with_zeroed_rows(nodes);
                &masked
            }
            _ => batch,
        };
        let fwd = self.forward(theta, input)?;
        let mut grads = OutputGrads::default();
        let mut extra: Vec<(String, Array2<f64>)> = Vec::new();
        let loss = match objective {
            Objective::Classification => {
                let (l, g) = cross_entropy(&fwd.logits, &batch.labels, &batch.train_mask)?;
                grads.logits = Some(g);
                l
            }
            Objective::Link { pos, neg } => {
                let (l, g) = link_bce(&fwd.embedding, pos, neg)?;
                grads.embedding = Some(g);
                l
            }
            Objective::Reconstruction { nodes } => {
                if !self.spec().recon_head {
                    return Err(Error::InvalidParam("reconstruction needs a recon head".into()));
                }
                let w = matrix(self.layout(), theta, "recon.w");
                let b = matrix(self.layout(), theta, "recon.b");
                let pred = fwd.embedding.dot(&w) + &b.row(0);
                let views: Vec<_> = self.spec().modalities.iter().map(|&m| batch.features[m].view()).collect();
                let target = ndarray::concatenate(Axis(1), &views).expect("aligned rows");
                let (l, g) = masked_mse(&pred, &target, nodes)?;
                extra.push(("recon.w".into(), fwd.embedding.t().dot(&g)));
                extra.push(("recon.b".into(), g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                grads.embedding = Some(g.dot(&w.t()));
                l
            }
            Objective::Contrastive {
                branches: (a, b),
                rows,
                temperature,
            } => {
                let za = fwd.branches[*a].select(Axis(0), rows);
                let zb = fwd.branches[*b].select(Axis(0), rows);
                let (l, ga, gb) = info_nce(&za, &zb, *temperature)?;
                let mut full = vec![None; fwd.branches.len()];
                for (j, g) in [(*a, ga), (*b, gb)] {
                    let mut dense = Array2::zeros(fwd.branches[j].raw_dim());
                    for (r, &i) in rows.iter().enumerate() {
                        let mut row = dense.row_mut(i);
                        row += &g.row(r);
                    }
                    full[j] = Some(dense);
                }
                grads.branches = full;
                l
            }
            Objective::Prototype {
                prototypes,
                present,
                lambda,
            } => {
                let rows: Vec<(usize, usize)> = (0..batch.num_nodes())
                    .filter(|&i| batch.train_mask[i])
                    .filter_map(|i| batch.labels[i].filter(|&y| present.get(y).copied().unwrap_or(false)).map(|y| (i, y)))
                    .collect();
                let mut g = Array2::zeros(fwd.embedding.raw_dim());
                let mut l = 0.0;
                if !rows.is_empty() {
                    let scale = lambda / rows.len() as f64;
                    for &(i, y) in &rows {
                        let diff = &fwd.embedding.row(i) - &prototypes.row(y);
                        l += scale * diff.dot(&diff);
                        g.row_mut(i).assign(&(diff * (2.0 * scale)));
                    }
                }
                grads.embedding = Some(g);
                l
            }
            Objective::Regression { target } => {
                let rows: Vec<usize> = (0..batch.num_nodes()).collect();
                let (l, g) = masked_mse(&fwd.logits, target, &rows)?;
                grads.logits = Some(g);
                l
            }
            Objective::Sum(_) => unreachable!("handled above"),
        };
        let pattern = fwd.activation_pattern();
        if !want_grad {
            return Ok((loss, None, pattern));
        }
        let mut grad = self.backward(theta, input, &fwd, grads);
        for (name, g) in extra {
            let seg = self.layout().segment(&name).expect("recon segment");
            grad[seg.range()].iter_mut().zip(g.iter()).for_each(|(a, b)| *a += b);
        }
        Ok((loss, Some(grad), pattern))
    }
}

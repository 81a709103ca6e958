use ndarray::{Array2, Axis};

use super::{Client, Federation, Task};
use crate::error::{Error, Result};
use crate::graph::SplitMasks;
use crate::metrics::{accuracy, auc_roc, average_precision, mrr, precision_recall_f1, recall_at_k, MetricReport};
use crate::nn::{argmax_rows, Forward};

/// Which parameters score each client's test nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    /// The server's global model.
    Global,
    /// Each client's own parameters.
    Local,
}

fn forward_for(fed: &Federation, client: &Client, mode: EvalMode) -> Result<Forward> {
    let params = match mode {
        EvalMode::Global => &fed.server.global,
        EvalMode::Local => &client.params,
    };
    fed.model.forward(&params.to_f64(), &client.batch)
}

fn test_nodes(client: &Client) -> Vec<usize> {
    SplitMasks::indices(&client.shard.split_masks.test)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

/// Test accuracy of every client under its own parameters; `None` without test nodes.
pub fn per_client_accuracy(fed: &Federation) -> Result<Vec<Option<f64>>> {
    fed.clients
        .iter()
        .map(|c| {
            let nodes = test_nodes(c);
            if nodes.is_empty() {
                return Ok(None);
            }
            let preds = argmax_rows(&forward_for(fed, c, EvalMode::Local)?.logits.select(Axis(0), &nodes));
            let labels: Vec<usize> = nodes.iter().map(|&i| c.eval_labels[i].expect("test nodes are labeled")).collect();
            accuracy(&preds, &labels).map(Some)
        })
        .collect()
}

/// Metrics on the union of client test sets plus per-client accuracy summaries.
pub fn evaluate(fed: &Federation, mode: EvalMode) -> Result<MetricReport> {
    match fed.task {
        Task::NodeClassification => classification(fed, mode),
        Task::LinkPrediction => links(fed, mode),
        Task::ModalityMatching => matching(fed, mode),
        Task::ModalityRetrieval => retrieval(fed, mode),
    }
}

fn classification(fed: &Federation, mode: EvalMode) -> Result<MetricReport> {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    let mut per_client = Vec::new();
    for c in &fed.clients {
        let nodes = test_nodes(c);
        if nodes.is_empty() {
            continue;
        }
        let p = argmax_rows(&forward_for(fed, c, mode)?.logits.select(Axis(0), &nodes));
        let y: Vec<usize> = nodes.iter().map(|&i| c.eval_labels[i].expect("test nodes are labeled")).collect();
        per_client.push(accuracy(&p, &y)?);
        preds.extend(p);
        labels.extend(y);
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("test nodes"));
    }
    let prf = precision_recall_f1(&preds, &labels)?;
    let (mean, std) = mean_std(&per_client);
    let mut report = MetricReport::new();
    report.insert("accuracy", accuracy(&preds, &labels)?);
    report.insert("precision", prf.precision);
    report.insert("recall", prf.recall);
    report.insert("f1", prf.f1);
    report.insert("client_accuracy_mean", mean);
    report.insert("client_accuracy_std", std);
    Ok(report)
}

fn links(fed: &Federation, mode: EvalMode) -> Result<MetricReport> {
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    for c in &fed.clients {
        let Some(split) = &c.link_split else { continue };
        if split.test_pos.is_empty() {
            continue;
        }
        let emb = forward_for(fed, c, mode)?.embedding;
        for (pairs, y) in [(&split.test_pos, true), (&split.test_neg, false)] {
            for &(u, v) in pairs {
                scores.push(emb.row(u).dot(&emb.row(v)));
                truth.push(y);
            }
        }
    }
    let mut report = MetricReport::new();
    report.insert("auc", auc_roc(&scores, &truth)?);
    report.insert("ap", average_precision(&scores, &truth)?);
    Ok(report)
}

fn normalized(z: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = z.select(Axis(0), rows);
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt().max(1e-12);
        row /= norm;
    }
    out
}

/// Cosine similarities between the first two branches over test nodes holding both modalities.
fn paired_similarity(fed: &Federation, c: &Client, mode: EvalMode) -> Result<Option<Array2<f64>>> {
    let spec = fed.model.spec();
    if spec.modalities.len() < 2 {
        return Err(Error::InvalidParam("modality tasks need two modalities".into()));
    }
    let (a, b) = (spec.modalities[0], spec.modalities[1]);
    let rows: Vec<usize> = test_nodes(c)
        .into_iter()
        .filter(|&i| c.batch.mask[[i, a]] && c.batch.mask[[i, b]])
        .collect();
    if rows.len() < 2 {
        return Ok(None);
    }
    let fwd = forward_for(fed, c, mode)?;
    Ok(Some(normalized(&fwd.branches[0], &rows).dot(&normalized(&fwd.branches[1], &rows).t())))
}

fn matching(fed: &Federation, mode: EvalMode) -> Result<MetricReport> {
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    let mut wins = 0usize;
    for c in &fed.clients {
        let Some(sim) = paired_similarity(fed, c, mode)? else { continue };
        let n = sim.nrows();
        for r in 0..n {
            let (pos, neg) = (sim[[r, r]], sim[[r, (r + 1) % n]]);
            scores.extend([pos, neg]);
            truth.extend([true, false]);
            wins += usize::from(pos > neg);
        }
    }
    let mut report = MetricReport::new();
    report.insert("auc", auc_roc(&scores, &truth)?);
    report.insert("accuracy", wins as f64 / (scores.len() / 2) as f64);
    Ok(report)
}

fn retrieval(fed: &Federation, mode: EvalMode) -> Result<MetricReport> {
    let mut lists = Vec::new();
    let mut truths = Vec::new();
    for c in &fed.clients {
        let Some(sim) = paired_similarity(fed, c, mode)? else { continue };
        for (r, row) in sim.rows().into_iter().enumerate() {
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
            lists.push(order);
            truths.push(r);
        }
    }
    let mut report = MetricReport::new();
    for k in [1, 5, 10] {
        report.insert(format!("recall@{k}"), recall_at_k(&lists, &truths, k)?);
    }
    report.insert("mrr", mrr(&lists, &truths)?);
    Ok(report)
}

//! Federated protocol engine.
//!
//! A [`Federation`] owns the server and all simulated clients. Each call to
//! [`Federation::run_round`] samples participants, broadcasts the serialized
//! global state, runs local epochs in parallel, aggregates the uploaded
//! payloads in client-id order and records byte-exact telemetry.

mod aggregate;
mod eval;
mod payload;

pub use aggregate::{aggregate_fedavg, aggregate_prototypes, mean_vectors, Update};
pub use eval::{evaluate, EvalMode};
pub use payload::{payload_bytes, vector_from_bytes, vector_to_bytes, Prototypes};

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ClientShard, MultimodalGraph};
use crate::metrics::MetricReport;
use crate::nn::{sample_negative_edges, Batch, Model, Objective, Optimizer, OptimizerConfig, ParamVector, TEMPERATURE};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    FedAvg,
    FedProx,
    Scaffold,
    FedProto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    NodeClassification,
    LinkPrediction,
    ModalityMatching,
    ModalityRetrieval,
}

/// Self-supervised objective for the first stage of the two-stage pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainObjective {
    #[default]
    Link,
    Reconstruction,
    Contrastive,
    /// Equal-weight sum of the three.
    All,
}

/// Fraction of nodes hidden by the reconstruction objective.
pub const RECON_FRACTION: f64 = 0.3;
/// Fraction of edges held out for link-prediction evaluation.
pub const LINK_TEST_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FedConfig {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub local_epochs: usize,
    pub mu: f64,
    pub participation: f64,
    pub proto_lambda: f64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FedAvg,
            rounds: 20,
            local_epochs: 1,
            mu: 0.01,
            participation: 1.0,
            proto_lambda: 1.0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_epochs == 0 {
            return Err(Error::InvalidParam("local_epochs must be positive".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::InvalidParam(format!("participation {} outside (0, 1]", self.participation)));
        }
        if self.mu < 0.0 || self.proto_lambda < 0.0 {
            return Err(Error::InvalidParam("mu and proto_lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Held-out edges for link-prediction evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkSplit {
    pub train_edges: Vec<(usize, usize)>,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

pub struct Client {
    pub id: usize,
    pub shard: ClientShard,
    /// Inputs for local training.
    pub batch: Batch,
    /// Labels scored at evaluation; stays clean when training labels are noised.
    pub eval_labels: Vec<Option<usize>>,
    pub link_split: Option<LinkSplit>,
    pub params: ParamVector,
    pub optimizer: Optimizer,
    /// SCAFFOLD control variate `c_i`.
    pub control: Vec<f64>,
    pub prototypes: Option<Prototypes>,
    pub seed: u64,
}

impl Client {
    /// Aggregation weight: training-node count, or node count for self-supervised work.
    pub fn weight(&self, task: Task) -> usize {
        match task {
            Task::NodeClassification => self.shard.num_samples(),
            _ => self.shard.graph.num_nodes,
        }
    }
}

pub struct Server {
    pub global: ParamVector,
    pub round: usize,
    /// SCAFFOLD server control variate `c`.
    pub control: Vec<f64>,
    pub prototypes: Option<Prototypes>,
}

/// Per-round telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub participants: Vec<usize>,
    pub client_losses: Vec<(usize, f64)>,
    /// Clients whose local update produced non-finite values.
    pub diverged: Vec<usize>,
    /// Clients skipped for lack of training data.
    pub skipped: Vec<usize>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub wall_ms: f64,
    pub metrics: MetricReport,
}

/// What local training optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Task,
    Pretrain(PretrainObjective),
}

pub struct Federation {
    pub model: Model,
    pub config: FedConfig,
    pub task: Task,
    pub stage: Stage,
    pub server: Server,
    pub clients: Vec<Client>,
    /// Segment indices excluded from local updates.
    pub frozen: Vec<usize>,
    pub seed: u64,
}

/// Hold out a fraction of edges plus as many sampled non-edges.
pub fn split_links(graph: &MultimodalGraph, seed: u64) -> LinkSplit {
    let m = graph.num_edges();
    let held = (LINK_TEST_FRACTION * m as f64).round() as usize;
    let mut r = rng::rng_from_seed(seed);
    let mut chosen = vec![false; m];
    for i in index::sample(&mut r, m, held) {
        chosen[i] = true;
    }
    let (mut test_pos, mut train_edges) = (Vec::new(), Vec::new());
    for (e, &c) in graph.edges.iter().zip(&chosen) {
        if c {
            test_pos.push(*e);
        } else {
            train_edges.push(*e);
        }
    }
    let test_neg = sample_negative_edges(graph.num_nodes, &graph.edges, test_pos.len(), &mut r);
    LinkSplit {
        train_edges,
        test_pos,
        test_neg,
    }
}

/// Uniform sample of `max(1, round(fraction · k))` client ids, sorted.
pub fn sample_participants(num_clients: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let count = ((fraction * num_clients as f64).round() as usize).clamp(1, num_clients.max(1));
    if count >= num_clients {
        return (0..num_clients).collect();
    }
    let mut ids = index::sample(&mut rng::rng_from_seed(seed), num_clients, count).into_vec();
    ids.sort_unstable();
    ids
}

/// Mean embedding per class over the training nodes of one client.
pub fn local_prototypes(embedding: &Array2<f64>, batch: &Batch, num_classes: usize) -> Prototypes {
    let mut means = Array2::zeros((num_classes, embedding.ncols()));
    let mut counts = vec![0u64; num_classes];
    for i in 0..batch.num_nodes() {
        if let (true, Some(y)) = (batch.train_mask[i], batch.labels[i]) {
            let mut row = means.row_mut(y);
            row += &embedding.row(i);
            counts[y] += 1;
        }
    }
    for (c, mut row) in means.axis_iter_mut(Axis(0)).enumerate() {
        if counts[c] > 0 {
            row /= counts[c] as f64;
        }
    }
    Prototypes { means, counts }
}

/// Everything a client needs from the server for one round.
struct Downlink {
    global: Option<ParamVector>,
    control: Option<Vec<f64>>,
    prototypes: Option<Prototypes>,
}

enum Upload {
    Params(Vec<u8>),
    Scaffold { delta_w: Vec<u8>, delta_c: Vec<u8> },
    Prototypes(Vec<u8>),
}

impl Upload {
    fn len(&self) -> usize {
        match self {
            Upload::Params(b) | Upload::Prototypes(b) => b.len(),
            Upload::Scaffold { delta_w, delta_c } => delta_w.len() + delta_c.len(),
        }
    }
}

enum Outcome {
    Done { loss: f64, upload: Upload },
    Diverged,
    Skipped,
}

impl Federation {
    pub fn new(
        model: Model,
        shards: Vec<ClientShard>,
        task: Task,
        config: FedConfig,
        optimizer: OptimizerConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if shards.is_empty() {
            return Err(Error::EmptyInput("client shards"));
        }
        if config.algorithm == Algorithm::FedProto && task != Task::NodeClassification {
            return Err(Error::InvalidParam("fedproto needs the node classification task".into()));
        }
        let global = model.init(rng::derive_seed(seed, "init"));
        let p = global.len();
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(id, shard)| {
                let client_seed = rng::derive_seed_indexed(seed, "client", id as u64);
                let train = shard.split_masks.train.clone();
                let (batch, link_split) = match task {
                    Task::LinkPrediction => {
                        let split = split_links(&shard.graph, rng::derive_seed(client_seed, "links"));
                        let g = shard.graph.with_edges(split.train_edges.clone())?;
                        (Batch::new(&g, train), Some(split))
                    }
                    _ => (Batch::new(&shard.graph, train), None),
                };
                Ok(Client {
                    id,
                    eval_labels: shard.graph.labels.clone(),
                    shard,
                    batch,
                    link_split,
                    params: global.clone(),
                    optimizer: optimizer.build(p),
                    control: vec![0.0; p],
                    prototypes: None,
                    seed: client_seed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            config,
            task,
            stage: Stage::Task,
            server: Server {
                global,
                round: 0,
                control: vec![0.0; p],
                prototypes: None,
            },
            clients,
            frozen: Vec::new(),
            seed,
        })
    }

    pub fn num_params(&self) -> usize {
        self.server.global.len()
    }

    /// Evaluation uses each client's own model for prototype federation.
    pub fn eval_mode(&self) -> EvalMode {
        match self.config.algorithm {
            Algorithm::FedProto => EvalMode::Local,
            _ => EvalMode::Global,
        }
    }

    pub fn evaluate(&self, mode: EvalMode) -> Result<MetricReport> {
        evaluate(self, mode)
    }

    /// One federated round: sample, broadcast, train, upload, aggregate.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let start = Instant::now();
        let round = self.server.round;
        let k = self.clients.len();
        let participants = sample_participants(
            k,
            self.config.participation,
            rng::derive_seed_indexed(self.seed, "participation", round as u64),
        );
        let algorithm = self.config.algorithm;
        let layout = self.server.global.layout().clone();
        let segments = layout.segments().len();

        let mut downlink_bytes = 0u64;
        let mut payload: Vec<u8> = Vec::new();
        let mut control_payload: Vec<u8> = Vec::new();
        let mut proto_payload: Vec<u8> = Vec::new();
        match algorithm {
            Algorithm::FedAvg | Algorithm::FedProx => payload = self.server.global.to_bytes(),
            Algorithm::Scaffold => {
                payload = self.server.global.to_bytes();
                control_payload = vector_to_bytes(&self.server.control, segments);
            }
            Algorithm::FedProto => {
                if let Some(p) = &self.server.prototypes {
                    proto_payload = p.to_bytes();
                }
            }
        }
        let per_client = (payload.len() + control_payload.len() + proto_payload.len()) as u64;
        downlink_bytes += per_client * participants.len() as u64;
        let downlink = Downlink {
            global: (!payload.is_empty()).then(|| ParamVector::from_bytes(&layout, &payload)).transpose()?,
            control: (!control_payload.is_empty())
                .then(|| vector_from_bytes(&control_payload, layout.len()))
                .transpose()?,
            prototypes: match &self.server.prototypes {
                Some(p) if !proto_payload.is_empty() => {
                    Some(Prototypes::from_bytes(p.num_classes(), p.means.ncols(), &proto_payload)?)
                }
                _ => None,
            },
        };

        let model = &self.model;
        let config = &self.config;
        let task = self.task;
        let stage = self.stage;
        let frozen = &self.frozen;
        let outcomes: Vec<(usize, Result<Outcome>)> = self
            .clients
            .par_iter_mut()
            .filter(|c| participants.binary_search(&c.id).is_ok())
            .map(|client| {
                let out = client_round(model, config, task, stage, frozen, client, &downlink, round, segments);
                (client.id, out)
            })
            .collect();

        let mut client_losses = Vec::new();
        let mut diverged = Vec::new();
        let mut skipped = Vec::new();
        let mut uploads = Vec::new();
        let mut uplink_bytes = 0u64;
        for (id, outcome) in outcomes {
            match outcome? {
                Outcome::Done { loss, upload } => {
                    uplink_bytes += upload.len() as u64;
                    client_losses.push((id, loss));
                    uploads.push((id, upload));
                }
                Outcome::Diverged => diverged.push(id),
                Outcome::Skipped => skipped.push(id),
            }
        }
        if !uploads.is_empty() {
            self.aggregate(&uploads, participants.len())?;
        }
        self.server.round += 1;
        Ok(RoundRecord {
            round,
            participants,
            client_losses,
            diverged,
            skipped,
            uplink_bytes,
            downlink_bytes,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            metrics: MetricReport::new(),
        })
    }

    fn aggregate(&mut self, uploads: &[(usize, Upload)], num_participants: usize) -> Result<()> {
        let layout = self.server.global.layout().clone();
        let weight = |id: usize| self.clients[id].weight(self.task) as f64;
        match self.config.algorithm {
            Algorithm::FedAvg | Algorithm::FedProx => {
                let params = uploads
                    .iter()
                    .map(|(id, u)| match u {
                        Upload::Params(b) => ParamVector::from_bytes(&layout, b).map(|p| (*id, p)),
                        _ => unreachable!("parameter upload expected"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let updates: Vec<Update> = params
                    .iter()
                    .map(|(id, p)| Update {
                        client_id: *id,
                        values: p.as_slice(),
                        weight: weight(*id),
                    })
                    .collect();
                self.server.global = ParamVector::from_f64(layout, &aggregate_fedavg(&updates)?)?;
            }
            Algorithm::Scaffold => {
                let mut deltas = Vec::new();
                let mut controls = Vec::new();
                for (id, u) in uploads {
                    let Upload::Scaffold { delta_w, delta_c } = u else {
                        unreachable!("scaffold upload expected")
                    };
                    deltas.push((*id, ParamVector::from_bytes(&layout, delta_w)?));
                    controls.push((*id, vector_from_bytes(delta_c, layout.len())?));
                }
                let updates: Vec<Update> = deltas
                    .iter()
                    .map(|(id, d)| Update {
                        client_id: *id,
                        values: d.as_slice(),
                        weight: weight(*id),
                    })
                    .collect();
                let step = aggregate_fedavg(&updates)?;
                let next: Vec<f64> = self.server.global.to_f64().iter().zip(&step).map(|(w, d)| w + d).collect();
                self.server.global = ParamVector::from_f64(layout, &next)?;
                let mean_dc = mean_vectors(&controls)?;
                let scale = num_participants as f64 / self.clients.len() as f64;
                self.server.control.iter_mut().zip(mean_dc).for_each(|(c, d)| *c += scale * d);
            }
            Algorithm::FedProto => {
                let (classes, dim) = (self.model.spec().out, self.model.spec().embed_dim());
                let protos = uploads
                    .iter()
                    .map(|(id, u)| match u {
                        Upload::Prototypes(b) => Prototypes::from_bytes(classes, dim, b).map(|p| (*id, p)),
                        _ => unreachable!("prototype upload expected"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.server.prototypes = Some(aggregate_prototypes(&protos)?);
            }
        }
        Ok(())
    }

    /// Train every client alone for `epochs` epochs from its current parameters.
    pub fn train_isolated(&mut self, epochs: usize) -> Result<Vec<(usize, f64)>> {
        let model = &self.model;
        let config = &self.config;
        let (task, stage, frozen) = (self.task, self.stage, &self.frozen);
        let round = self.server.round;
        let results: Vec<(usize, Result<Option<f64>>)> = self
            .clients
            .par_iter_mut()
            .map(|c| {
                let out = local_epochs(model, config, task, stage, frozen, c, None, None, round, epochs);
                (c.id, out)
            })
            .collect();
        self.server.round += 1;
        let mut losses = Vec::new();
        for (id, r) in results {
            if let Some(loss) = r? {
                losses.push((id, loss));
            }
        }
        Ok(losses)
    }
}

/// Build the epoch objective for a client.
fn epoch_objective(
    model: &Model,
    task: Task,
    stage: Stage,
    client: &Client,
    epoch_seed: u64,
) -> Result<Objective> {
    let batch = &client.batch;
    let link = || -> Result<Objective> {
        let pos = match &client.link_split {
            Some(split) => split.train_edges.clone(),
            None => client.shard.graph.edges.clone(),
        };
        let neg = sample_negative_edges(batch.num_nodes(), &client.shard.graph.edges, pos.len(), &mut rng::rng_from_seed(epoch_seed));
        if neg.len() != pos.len() {
            return Err(Error::InvalidParam(format!("client {} too dense for negative sampling", client.id)));
        }
        Ok(Objective::Link { pos, neg })
    };
    let recon = || Objective::masked_reconstruction(batch.num_nodes(), RECON_FRACTION, epoch_seed);
    let contrast = || Objective::contrastive(model, batch, TEMPERATURE);
    match stage {
        Stage::Task => match task {
            Task::NodeClassification => Ok(Objective::Classification),
            Task::LinkPrediction => link(),
            Task::ModalityMatching | Task::ModalityRetrieval => contrast(),
        },
        Stage::Pretrain(PretrainObjective::Link) => link(),
        Stage::Pretrain(PretrainObjective::Reconstruction) => recon(),
        Stage::Pretrain(PretrainObjective::Contrastive) => contrast(),
        Stage::Pretrain(PretrainObjective::All) => Ok(Objective::Sum(vec![(1.0, link()?), (1.0, recon()?), (1.0, contrast()?)])),
    }
}

fn has_training_data(task: Task, stage: Stage, client: &Client) -> bool {
    match (stage, task) {
        (Stage::Task, Task::NodeClassification) => client.shard.num_samples() > 0,
        (Stage::Task, Task::LinkPrediction) | (Stage::Pretrain(PretrainObjective::Link), _) => {
            client.link_split.as_ref().map_or(client.shard.graph.num_edges(), |s| s.train_edges.len()) > 0
        }
        _ => client.batch.num_nodes() >= 2,
    }
}

/// Runs local epochs; `Ok(None)` means the client was skipped.
#[allow(clippy::too_many_arguments)]
fn local_epochs(
    model: &Model,
    config: &FedConfig,
    task: Task,
    stage: Stage,
    frozen: &[usize],
    client: &mut Client,
    anchor: Option<&[f64]>,
    correction: Option<&[f64]>,
    round: usize,
    epochs: usize,
) -> Result<Option<f64>> {
    if !has_training_data(task, stage, client) {
        return Ok(None);
    }
    let round_seed = rng::derive_seed_indexed(client.seed, "round", round as u64);
    let proto_term = match (&client.prototypes, config.algorithm, stage) {
        (Some(p), Algorithm::FedProto, Stage::Task) if config.proto_lambda > 0.0 => Some(Objective::Prototype {
            prototypes: p.means.clone(),
            present: p.present(),
            lambda: config.proto_lambda,
        }),
        _ => None,
    };
    let mut total = 0.0;
    for e in 0..epochs {
        let mut objective = epoch_objective(model, task, stage, client, rng::derive_seed_indexed(round_seed, "epoch", e as u64))?;
        if let Some(term) = &proto_term {
            objective = Objective::Sum(vec![(1.0, objective), (1.0, term.clone())]);
        }
        let theta = client.params.to_f64();
        let (mut loss, mut grad) = model.loss_and_grad(&theta, &client.batch, &objective)?;
        if let Some(anchor) = anchor {
            loss += proximal_value(&theta, anchor, config.mu);
        }
        if let Some(corr) = correction {
            grad.iter_mut().zip(corr).for_each(|(g, c)| *g += c);
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss of client {}", client.id)));
        }
        client.optimizer.step(&mut client.params, &grad, frozen)?;
        if let Some(anchor) = anchor {
            proximal_map(&mut client.params, anchor, client.optimizer.config().lr * config.mu, frozen);
        }
        total += loss;
    }
    Ok(Some(total / epochs as f64))
}

#[allow(clippy::too_many_arguments)]
fn client_round(
    model: &Model,
    config: &FedConfig,
    task: Task,
    stage: Stage,
    frozen: &[usize],
    client: &mut Client,
    down: &Downlink,
    round: usize,
    segments: usize,
) -> Result<Outcome> {
    if let Some(global) = &down.global {
        client.params = global.clone();
    }
    if config.algorithm == Algorithm::FedProto {
        client.prototypes = down.prototypes.clone();
    }
    let start = client.params.to_f64();
    let correction: Option<Vec<f64>> = match (config.algorithm, &down.control) {
        (Algorithm::Scaffold, Some(c)) => Some(c.iter().zip(&client.control).map(|(c, ci)| c - ci).collect()),
        _ => None,
    };
    let anchor = (config.algorithm == Algorithm::FedProx && config.mu > 0.0).then_some(start.as_slice());
    let epochs = config.local_epochs;
    let loss = match local_epochs(model, config, task, stage, frozen, client, anchor, correction.as_deref(), round, epochs) {
        Ok(Some(loss)) => loss,
        Ok(None) => return Ok(Outcome::Skipped),
        Err(Error::NonFinite(_)) => {
            client.optimizer.reset();
            return Ok(Outcome::Diverged);
        }
        Err(e) => return Err(e),
    };
    let upload = match config.algorithm {
        Algorithm::FedAvg | Algorithm::FedProx => Upload::Params(client.params.to_bytes()),
        Algorithm::Scaffold => {
            let c = down.control.as_ref().expect("scaffold control broadcast");
            let lr = client.optimizer.config().lr;
            if lr * epochs as f64 == 0.0 {
                return Err(Error::InvalidParam("scaffold needs a positive step size".into()));
            }
            let end = client.params.to_f64();
            let next = scaffold_control(&client.control, c, &start, &end, lr, epochs);
            let delta_c: Vec<f64> = next.iter().zip(&client.control).map(|(n, o)| n - o).collect();
            client.control = next;
            let delta_w: Vec<f64> = end.iter().zip(&start).map(|(e, s)| e - s).collect();
            Upload::Scaffold {
                delta_w: vector_to_bytes(&delta_w, segments),
                delta_c: vector_to_bytes(&delta_c, segments),
            }
        }
        Algorithm::FedProto => {
            let fwd = model.forward(&client.params.to_f64(), &client.batch)?;
            let protos = local_prototypes(&fwd.embedding, &client.batch, model.spec().out);
            if protos.counts.iter().all(|&c| c == 0) {
                return Err(Error::EmptyInput("client prototypes"));
            }
            let bytes = protos.to_bytes();
            client.prototypes = Some(protos);
            Upload::Prototypes(bytes)
        }
    };
    Ok(Outcome::Done { loss, upload })
}

/// `(μ/2)·‖w − ŵ‖²`.
pub fn proximal_value(w: &[f64], anchor: &[f64], mu: f64) -> f64 {
    0.5 * mu * w.iter().zip(anchor).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Exact proximal step for `(μ/2)·‖w − ŵ‖²` with step `η`: `w ← (w + ημ·ŵ)/(1 + ημ)`.
pub fn proximal_map(params: &mut ParamVector, anchor: &[f64], eta_mu: f64, frozen: &[usize]) {
    let ranges: Vec<_> = frozen.iter().map(|&s| params.layout().segments()[s].range()).collect();
    for (i, (w, a)) in params.as_mut_slice().iter_mut().zip(anchor).enumerate() {
        if ranges.iter().any(|r| r.contains(&i)) {
            continue;
        }
        *w = ((*w as f64 + eta_mu * a) / (1.0 + eta_mu)) as f32;
    }
}

/// SCAFFOLD control update `c_i' = c_i − c + (ŵ − w)/(η·steps)`.
pub fn scaffold_control(c_i: &[f64], c: &[f64], global: &[f64], local: &[f64], lr: f64, steps: usize) -> Vec<f64> {
    let denom = lr * steps as f64;
    (0..c_i.len()).map(|i| c_i[i] - c[i] + (global[i] - local[i]) / denom).collect()
}

/// Per-client metrics around the finetuning stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageReport {
    pub pretrain_records: Vec<RoundRecord>,
    pub before: Vec<Option<f64>>,
    pub after: Vec<Option<f64>>,
}

impl TwoStageReport {
    pub fn mean_after(&self) -> f64 {
        mean_present(&self.after)
    }

    pub fn mean_before(&self) -> f64 {
        mean_present(&self.before)
    }
}

fn mean_present(values: &[Option<f64>]) -> f64 {
    let v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Federated self-supervised pretraining followed by communication-free local finetuning.
pub fn run_two_stage(
    fed: &mut Federation,
    objective: PretrainObjective,
    pretrain_rounds: usize,
    finetune_epochs: usize,
    finetune_backbone: bool,
) -> Result<TwoStageReport> {
    if fed.config.algorithm == Algorithm::FedProto {
        return Err(Error::InvalidParam("pretraining exchanges parameters; fedproto does not".into()));
    }
    let head = fed.model.head_segments();
    fed.stage = Stage::Pretrain(objective);
    fed.frozen = head.clone();
    let mut pretrain_records = Vec::new();
    for _ in 0..pretrain_rounds {
        pretrain_records.push(fed.run_round()?);
    }
    fed.stage = Stage::Task;
    fed.frozen = if finetune_backbone {
        Vec::new()
    } else {
        (0..fed.server.global.layout().segments().len()).filter(|s| !head.contains(s)).collect()
    };
    for c in &mut fed.clients {
        c.params = fed.server.global.clone();
        c.optimizer.reset();
    }
    let before = eval::per_client_accuracy(fed)?;
    fed.train_isolated(finetune_epochs)?;
    let after = eval::per_client_accuracy(fed)?;
    fed.frozen.clear();
    Ok(TwoStageReport {
        pretrain_records,
        before,
        after,
    })
}

/// No-collaboration baseline: each client trains alone; returns per-client test accuracy.
pub fn run_isolated(fed: &mut Federation, epochs: usize) -> Result<Vec<Option<f64>>> {
    fed.train_isolated(epochs)?;
    eval::per_client_accuracy(fed)
}

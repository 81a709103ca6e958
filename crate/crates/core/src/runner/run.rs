use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Generator};
use crate::error::{Error, Result};
use crate::federation::{Algorithm, Federation, RoundRecord, Stage};
use crate::graph::{load_bundle, ClientShard, MultimodalGraph};
use crate::metrics::{convergence_round, MetricReport};
use crate::nn::{Model, ModelSpec};
use crate::partition::build_scenario;
use crate::perturb::apply_to_shards;
use crate::rng;
use crate::synth::{generate_dataset, generate_rdpg, synthesize_features, DatasetSpec, FeatureSynthParams, RdpgParams};

/// Share of the best value a curve must reach to count as converged.
pub const CONVERGENCE_THRESHOLD: f64 = 0.995;

/// One `(scenario, algorithm, seed, round)` record; rounds count from 1.
/// A failed run gets a single row with round 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub ratio: f64,
    pub round: usize,
    pub stage: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub participants: usize,
    pub diverged: usize,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub metrics: MetricReport,
}

impl RawRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Wall-clock time per round, kept apart so raw rows stay reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub ratio: f64,
    pub round: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub final_mean: f64,
    pub final_std: f64,
    pub best_mean: f64,
    pub best_std: f64,
}

/// Aggregate over seeds for one `(scenario, algorithm, ratio)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: Algorithm,
    pub ratio: f64,
    pub seeds: usize,
    pub failed: usize,
    /// Mean over seeds of the primary metric's convergence round.
    pub convergence_round: f64,
    pub stats: BTreeMap<String, Stat>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub raw: Vec<RawRow>,
    pub timing: Vec<TimingRow>,
    pub summary: Vec<SummaryRow>,
}

/// Mean and sample standard deviation; std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn seed_for(base: u64, label: &str, run_seed: u64) -> u64 {
    rng::derive_seed_indexed(base, label, run_seed)
}

/// Generate or load the full graph for one run seed.
pub fn build_graph(config: &ExperimentConfig, seed: u64) -> Result<MultimodalGraph> {
    let d = &config.dataset;
    if let Some(path) = &d.bundle {
        return load_bundle(path);
    }
    let data_seed = seed_for(d.seed, "dataset", seed);
    let informative = if config.feat.informative_modalities.is_empty() {
        (0..d.modalities.len()).collect()
    } else {
        config.feat.informative_modalities.clone()
    };
    match d.generator.unwrap_or(Generator::Sbm) {
        Generator::Sbm => generate_dataset(&DatasetSpec {
            block_sizes: d.blocks.clone(),
            intra_p: config.sbm.intra_p,
            inter_p: config.sbm.inter_p,
            modalities: d.modalities.clone(),
            separation: d.separation,
            sigma: config.feat.sigma,
            informative_modalities: informative,
            seed: data_seed,
        }),
        Generator::Rdpg => {
            let labels: Vec<usize> = d.blocks.iter().enumerate().flat_map(|(b, &s)| std::iter::repeat_n(b, s)).collect();
            let k = config.rdpg.latent_dim;
            let mut r = rng::rng_from_seed(rng::derive_seed(data_seed, "rdpg"));
            let positions = Array2::from_shape_fn((labels.len(), k), |(i, j)| {
                let base = if labels[i] % k == j { config.rdpg.scale } else { 0.0 };
                (base + config.rdpg.noise * r.random::<f64>()).clamp(0.0, 1.0)
            });
            let graph = generate_rdpg(&RdpgParams {
                latent_dim: k,
                latent_positions: positions,
                seed: rng::derive_seed(data_seed, "edges"),
            })?
            .with_labels(labels.into_iter().map(Some).collect(), d.blocks.len())?;
            let params = FeatureSynthParams::class_separated(
                d.modalities.clone(),
                d.blocks.len(),
                d.separation,
                config.feat.sigma,
                informative,
                rng::derive_seed(data_seed, "means"),
            );
            synthesize_features(&graph, &params, rng::derive_seed(data_seed, "features"))
        }
    }
}

/// Clean shards for one run seed, before perturbation.
pub fn build_shards(config: &ExperimentConfig, graph: &MultimodalGraph, seed: u64) -> Result<Vec<ClientShard>> {
    let scenario = config.scenario.to_config(seed_for(config.scenario.seed, "scenario", seed));
    Ok(build_scenario(graph, &scenario)?.shards)
}

pub fn scenario_name(config: &ExperimentConfig) -> String {
    config.scenario.to_config(config.scenario.seed).cell_name()
}

fn ratio_of(config: &ExperimentConfig) -> f64 {
    config.perturb.as_ref().map_or(0.0, |p| p.ratio)
}

fn build_federation(config: &ExperimentConfig, seed: u64) -> Result<Federation> {
    let graph = build_graph(config, seed)?;
    let clean = build_shards(config, &graph, seed)?;
    let shards = match &config.perturb {
        Some(p) => apply_to_shards(&clean, &p.spec(seed_for(seed, "perturb", 0)))?.0,
        None => clean.clone(),
    };
    let mut spec = ModelSpec::for_graph(
        &graph,
        config.model.architecture,
        &config.model.modalities,
        config.model.hidden,
        config.model.num_layers,
    )?;
    spec.fusion = config.model.fusion;
    spec.recon_head = config.pretrain.is_some();
    let model = Model::new(spec)?;
    let mut fed = Federation::new(
        model,
        shards,
        config.task,
        config.fed.clone(),
        config.optim.clone(),
        rng::derive_seed(seed, "federation"),
    )?;
    for (client, shard) in fed.clients.iter_mut().zip(&clean) {
        client.eval_labels = shard.graph.labels.clone();
    }
    Ok(fed)
}

fn filtered(config: &ExperimentConfig, report: MetricReport) -> MetricReport {
    if config.metrics.is_empty() {
        return report;
    }
    MetricReport(report.0.into_iter().filter(|(k, _)| config.metrics.contains(k)).collect())
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<Vec<(RoundRecord, &'static str)>> {
    let mut fed = build_federation(config, seed)?;
    let mode = fed.eval_mode();
    let mut records = Vec::new();
    let pretrain_rounds = config.pretrain.as_ref().map_or(0, |p| p.rounds);
    if pretrain_rounds > 0 {
        let p = config.pretrain.as_ref().expect("checked");
        fed.stage = Stage::Pretrain(p.objective);
        fed.frozen = fed.model.head_segments();
        for _ in 0..pretrain_rounds {
            let mut rec = fed.run_round()?;
            rec.metrics = filtered(config, fed.evaluate(mode)?);
            records.push((rec, "pretrain"));
        }
        fed.stage = Stage::Task;
        fed.frozen.clear();
        for c in &mut fed.clients {
            c.optimizer.reset();
        }
    }
    for _ in 0..config.fed.rounds {
        let start = Instant::now();
        let mut rec = fed.run_round()?;
        rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        rec.metrics = filtered(config, fed.evaluate(mode)?);
        records.push((rec, "task"));
    }
    Ok(records)
}

fn rows_for(config: &ExperimentConfig, seed: u64) -> (Vec<RawRow>, Vec<TimingRow>) {
    let scenario = scenario_name(config);
    let algorithm = config.fed.algorithm;
    let ratio = ratio_of(config);
    match run_seed(config, seed) {
        Ok(records) => records
            .into_iter()
            .map(|(r, stage)| {
                let raw = RawRow {
                    scenario: scenario.clone(),
                    algorithm,
                    seed,
                    ratio,
                    round: r.round + 1,
                    stage: stage.to_string(),
                    status: "ok".into(),
                    error: None,
                    participants: r.participants.len(),
                    diverged: r.diverged.len(),
                    uplink_bytes: r.uplink_bytes,
                    downlink_bytes: r.downlink_bytes,
                    metrics: r.metrics,
                };
                let timing = TimingRow {
                    scenario: scenario.clone(),
                    algorithm,
                    seed,
                    ratio,
                    round: r.round + 1,
                    wall_ms: r.wall_ms,
                };
                (raw, timing)
            })
            .unzip(),
        Err(e) => {
            let raw = RawRow {
                scenario,
                algorithm,
                seed,
                ratio,
                round: 0,
                stage: "task".into(),
                status: "failed".into(),
                error: Some(e.class().to_string()),
                participants: 0,
                diverged: 0,
                uplink_bytes: 0,
                downlink_bytes: 0,
                metrics: MetricReport::new(),
            };
            (vec![raw], Vec::new())
        }
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Run every `(config, seed)` pair concurrently; rows come back in input order.
pub fn run_configs(configs: &[ExperimentConfig], workers: usize) -> Result<ResultsTable> {
    for c in configs {
        c.validate()?;
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = configs.iter().flat_map(|c| c.seeds.iter().map(move |&s| (c, s))).collect();
    let parts: Vec<(Vec<RawRow>, Vec<TimingRow>)> =
        with_pool(workers, || jobs.par_iter().map(|&(c, s)| rows_for(c, s)).collect())?;
    let mut table = ResultsTable::default();
    for (raw, timing) in parts {
        table.raw.extend(raw);
        table.timing.extend(timing);
    }
    let primary = configs.first().map_or("accuracy", |c| c.primary_metric());
    table.summary = summarize(&table.raw, primary);
    Ok(table)
}

/// Run one experiment over all its seeds and persist it when `output` is set.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ResultsTable> {
    let table = run_configs(std::slice::from_ref(config), workers)?;
    if let Some(dir) = &config.output {
        table.write(dir)?;
    }
    Ok(table)
}

type GroupKey = (String, Algorithm, u64);

/// Per-group statistics recomputed from raw rows; only task-stage rows count.
pub fn summarize(raw: &[RawRow], primary: &str) -> Vec<SummaryRow> {
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<&RawRow>> = BTreeMap::new();
    for row in raw {
        let key = (row.scenario.clone(), row.algorithm, row.ratio.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(row);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let mut seeds: Vec<u64> = Vec::new();
            for r in rows.iter().filter(|r| r.is_ok()) {
                if !seeds.contains(&r.seed) {
                    seeds.push(r.seed);
                }
            }
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            let curves: Vec<Vec<&RawRow>> = seeds
                .iter()
                .map(|&s| rows.iter().copied().filter(|r| r.seed == s && r.is_ok() && r.stage == "task").collect())
                .collect();
            let mut names: Vec<&String> = curves.iter().flatten().flat_map(|r| r.metrics.0.keys()).collect();
            names.sort();
            names.dedup();
            let stats = names
                .into_iter()
                .map(|name| {
                    let series: Vec<Vec<f64>> = curves
                        .iter()
                        .map(|c| c.iter().filter_map(|r| r.metrics.get(name)).collect::<Vec<f64>>())
                        .filter(|v| !v.is_empty())
                        .collect();
                    let finals: Vec<f64> = series.iter().map(|v| *v.last().expect("nonempty")).collect();
                    let bests: Vec<f64> = series.iter().map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
                    let (final_mean, final_std) = mean_std(&finals);
                    let (best_mean, best_std) = mean_std(&bests);
                    (
                        name.clone(),
                        Stat {
                            final_mean,
                            final_std,
                            best_mean,
                            best_std,
                        },
                    )
                })
                .collect();
            let rounds: Vec<f64> = curves
                .iter()
                .filter_map(|c| {
                    let v: Vec<f64> = c.iter().filter_map(|r| r.metrics.get(primary)).collect();
                    convergence_round(&v, CONVERGENCE_THRESHOLD).ok().map(|r| r as f64)
                })
                .collect();
            SummaryRow {
                scenario: key.0,
                algorithm: key.1,
                ratio: f64::from_bits(key.2),
                seeds: seeds.len(),
                failed,
                convergence_round: mean_std(&rounds).0,
                stats,
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

fn algorithm_name(a: Algorithm) -> String {
    serde_json::to_value(a).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

impl ResultsTable {
    pub fn raw_jsonl(&self) -> String {
        jsonl(&self.raw)
    }

    pub fn timing_jsonl(&self) -> String {
        jsonl(&self.timing)
    }

    /// Wide CSV: one row per group, four columns per metric.
    pub fn summary_csv(&self) -> Result<String> {
        let mut metrics: Vec<&String> = self.summary.iter().flat_map(|s| s.stats.keys()).collect();
        metrics.sort();
        metrics.dedup();
        let mut header: Vec<String> = ["scenario", "algorithm", "ratio", "seeds", "failed", "convergence_round"]
            .map(String::from)
            .to_vec();
        for m in &metrics {
            for suffix in ["final_mean", "final_std", "best_mean", "best_std"] {
                header.push(format!("{m}_{suffix}"));
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.summary {
            let mut rec = vec![
                s.scenario.clone(),
                algorithm_name(s.algorithm),
                fmt(s.ratio),
                s.seeds.to_string(),
                s.failed.to_string(),
                fmt(s.convergence_round),
            ];
            for m in &metrics {
                match s.stats.get(*m) {
                    Some(st) => rec.extend([st.final_mean, st.final_std, st.best_mean, st.best_std].map(fmt)),
                    None => rec.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// Writes `raw.jsonl`, `timing.jsonl` and `summary.csv`, each via temp file and rename.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("raw.jsonl"), self.raw_jsonl().as_bytes())?;
        write_atomic(&dir.join("timing.jsonl"), self.timing_jsonl().as_bytes())?;
        write_atomic(&dir.join("summary.csv"), self.summary_csv()?.as_bytes())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parse a `raw.jsonl` file back into rows.
pub fn read_raw(path: impl AsRef<Path>) -> Result<Vec<RawRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

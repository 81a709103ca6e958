use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, MatrixSection};
use super::run::{run_configs, write_atomic, ResultsTable, RawRow};
use crate::error::{Error, Result};

/// Cartesian product over the matrix axes, algorithms and seeds.
///
/// Each output config has a single seed and no matrix section. Absent axes
/// keep the base value; an empty axis is an error.
pub fn expand_matrix(config: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    config.validate()?;
    let m = config.matrix.clone().unwrap_or_default();
    let base = ExperimentConfig {
        matrix: None,
        ..config.clone()
    };
    let MatrixSection {
        modality,
        topology,
        label,
        algorithms,
    } = m;
    let modality = modality.unwrap_or_else(|| vec![base.scenario.modality]);
    let topology = topology.unwrap_or_else(|| vec![base.scenario.topology]);
    let label = label.unwrap_or_else(|| vec![base.scenario.label]);
    let algorithms = algorithms.unwrap_or_else(|| vec![base.fed.algorithm]);
    let mut out = Vec::new();
    for &a in &algorithms {
        for &mo in &modality {
            for &t in &topology {
                for &l in &label {
                    for &s in &base.seeds {
                        let mut c = base.clone();
                        c.fed.algorithm = a;
                        c.scenario.modality = mo;
                        c.scenario.topology = t;
                        c.scenario.label = l;
                        c.seeds = vec![s];
                        out.push(c);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Expand and run the whole matrix; persists when `output` is set.
pub fn run_matrix(config: &ExperimentConfig, workers: usize) -> Result<ResultsTable> {
    let configs = expand_matrix(config)?;
    let table = run_configs(&configs, workers)?;
    if let Some(dir) = &config.output {
        table.write(dir)?;
    }
    Ok(table)
}

/// Final-round primary metric per ratio, over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub scenario: String,
    pub algorithm: String,
    pub ratio: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub table: ResultsTable,
    pub points: Vec<SweepPoint>,
}

fn final_values(raw: &[RawRow], ratio: f64, metric: &str) -> Vec<f64> {
    let mut seeds: Vec<u64> = Vec::new();
    for r in raw.iter().filter(|r| r.is_ok() && r.ratio == ratio && r.stage == "task") {
        if !seeds.contains(&r.seed) {
            seeds.push(r.seed);
        }
    }
    seeds
        .iter()
        .filter_map(|&s| {
            raw.iter()
                .filter(|r| r.is_ok() && r.ratio == ratio && r.seed == s && r.stage == "task")
                .filter_map(|r| r.metrics.get(metric))
                .last()
        })
        .collect()
}

/// Perturbation sweep: each ratio perturbs freshly generated base shards.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    config.validate()?;
    let p = config
        .perturb
        .as_ref()
        .ok_or_else(|| Error::Config("sweep needs a perturb section".into()))?;
    if p.ratios.is_empty() {
        return Err(Error::EmptyInput("perturb.ratios"));
    }
    let seeds = if p.seeds.is_empty() { config.seeds.clone() } else { p.seeds.clone() };
    let configs: Vec<ExperimentConfig> = p
        .ratios
        .iter()
        .map(|&ratio| {
            let mut c = config.clone();
            c.seeds = seeds.clone();
            c.perturb.as_mut().expect("present").ratio = ratio;
            c
        })
        .collect();
    let table = run_configs(&configs, workers)?;
    let metric = config.primary_metric().to_string();
    let scenario = super::run::scenario_name(config);
    let algorithm = serde_json::to_value(config.fed.algorithm)?.as_str().unwrap_or_default().to_string();
    let points = p
        .ratios
        .iter()
        .map(|&ratio| {
            let v = final_values(&table.raw, ratio, &metric);
            let (mean, std) = super::run::mean_std(&v);
            SweepPoint {
                scenario: scenario.clone(),
                algorithm: algorithm.clone(),
                ratio,
                metric: metric.clone(),
                mean,
                stderr: if v.is_empty() { f64::NAN } else { std / (v.len() as f64).sqrt() },
                n: v.len(),
            }
        })
        .collect();
    let result = SweepResult { table, points };
    if let Some(dir) = &config.output {
        result.table.write(dir)?;
        write_atomic(&dir.join("sweep.csv"), sweep_csv(&result.points)?.as_bytes())?;
    }
    Ok(result)
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(super::run::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

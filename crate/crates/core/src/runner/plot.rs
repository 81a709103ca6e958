use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::run::{csv_err, mean_std, RawRow};
use crate::error::{Error, Result};

/// Which raw columns become the x axis, the series and the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotSpec {
    pub x: String,
    pub y: String,
    pub series: String,
    /// Use only each run's last task round.
    #[serde(default)]
    pub final_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub x: f64,
    pub series: String,
    pub mean: f64,
    pub std: f64,
}

const NUMERIC: &[&str] = &["round", "seed", "ratio", "participants", "diverged", "uplink_bytes", "downlink_bytes"];
const TEXT: &[&str] = &["scenario", "algorithm", "stage"];

fn numeric(row: &RawRow, column: &str) -> Option<f64> {
    match column {
        "round" => Some(row.round as f64),
        "seed" => Some(row.seed as f64),
        "ratio" => Some(row.ratio),
        "participants" => Some(row.participants as f64),
        "diverged" => Some(row.diverged as f64),
        "uplink_bytes" => Some(row.uplink_bytes as f64),
        "downlink_bytes" => Some(row.downlink_bytes as f64),
        metric => row.metrics.get(metric),
    }
}

fn text(row: &RawRow, column: &str) -> String {
    match column {
        "scenario" => row.scenario.clone(),
        "algorithm" => serde_json::to_value(row.algorithm)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        "stage" => row.stage.clone(),
        other => numeric(row, other).map_or_else(String::new, |v| v.to_string()),
    }
}

fn is_known(rows: &[RawRow], column: &str) -> bool {
    NUMERIC.contains(&column) || TEXT.contains(&column) || rows.iter().any(|r| r.metrics.get(column).is_some())
}

/// Tidy `(x, series, mean, std)` rows grouped over every matching raw row.
pub fn emit_plotdata(rows: &[RawRow], spec: &PlotSpec) -> Result<Vec<PlotRow>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("results table"));
    }
    for column in [&spec.x, &spec.y, &spec.series] {
        if !is_known(rows, column) {
            return Err(Error::UnknownColumn(column.clone()));
        }
    }
    if TEXT.contains(&spec.x.as_str()) || TEXT.contains(&spec.y.as_str()) {
        return Err(Error::InvalidParam(format!("{} / {} must be numeric columns", spec.x, spec.y)));
    }
    let ok: Vec<&RawRow> = rows.iter().filter(|r| r.is_ok() && r.stage == "task").collect();
    let selected: Vec<&RawRow> = if spec.final_only {
        let mut last: BTreeMap<(String, String, u64, u64), &RawRow> = BTreeMap::new();
        for r in &ok {
            let key = (r.scenario.clone(), text(r, "algorithm"), r.ratio.to_bits(), r.seed);
            last.insert(key, r);
        }
        ok.iter().copied().filter(|r| last.values().any(|l| std::ptr::eq(*l, *r))).collect()
    } else {
        ok
    };
    let mut groups: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    let mut xs: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for r in selected {
        let (Some(x), Some(y)) = (numeric(r, &spec.x), numeric(r, &spec.y)) else {
            continue;
        };
        let key = (text(r, &spec.series), x.to_bits());
        xs.insert(key.clone(), x);
        groups.entry(key).or_default().push(y);
    }
    let mut out: Vec<PlotRow> = groups
        .into_iter()
        .map(|(key, ys)| {
            let (mean, std) = mean_std(&ys);
            PlotRow {
                x: xs[&key],
                series: key.0,
                mean,
                std,
            }
        })
        .collect();
    out.sort_by(|a, b| a.series.cmp(&b.series).then(a.x.total_cmp(&b.x)));
    Ok(out)
}

pub fn plotdata_csv(rows: &[PlotRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "series", "mean", "std"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.x.to_string(), r.series.clone(), r.mean.to_string(), r.std.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn parse_plotdata(text: &str) -> Result<Vec<PlotRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

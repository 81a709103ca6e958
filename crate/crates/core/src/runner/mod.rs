//! Experiment orchestration: config parsing, matrix expansion, seeded
//! execution, telemetry and persistence.
//!
//! A run writes `raw.jsonl` (one row per seed and round), `timing.jsonl`
//! (wall-clock only, so raw rows stay byte-reproducible) and `summary.csv`.

mod config;
mod matrix;
mod plot;
mod run;
mod scaling;

pub use config::*;
pub use matrix::{expand_matrix, run_matrix, run_sweep, sweep_csv, SweepPoint, SweepResult};
pub use plot::{emit_plotdata, parse_plotdata, plotdata_csv, PlotRow, PlotSpec};
pub use run::{
    build_graph, build_shards, mean_std, read_raw, run_configs, run_experiment, scenario_name, summarize, write_atomic,
    RawRow, ResultsTable, Stat, SummaryRow, TimingRow, CONVERGENCE_THRESHOLD,
};
pub use scaling::{loglog_slope, measure_scaling, random_graph, CostModel, ScalingAxis, ScalingGrid, ScalingPoint, ScalingResult};

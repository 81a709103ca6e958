use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmfgl::federation::Algorithm;
use mmfgl::graph::save_shards;
use mmfgl::runner::{
    build_graph, build_shards, emit_plotdata, measure_scaling, plotdata_csv, read_raw, run_experiment, run_matrix,
    run_sweep, write_atomic, ExperimentConfig, PlotSpec, ScalingAxis, ScalingGrid,
};
use mmfgl::{graph::save_bundle, Result};

#[derive(Parser)]
#[command(name = "mmfgl", version, about = "Multimodal federated graph learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides `seeds` in the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if self.out.is_some() {
            config.output = self.out.clone();
        }
        if !self.seeds.is_empty() {
            config.seeds = self.seeds.clone();
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> PathBuf {
        config.output.clone().unwrap_or_else(|| PathBuf::from("results"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset for the first seed and save it as a bundle.
    Gen(Common),
    /// Build client shards for the first seed and save them.
    Partition(Common),
    /// Run one experiment over all seeds.
    Run(Common),
    /// Run a perturbation sweep, or the scenario matrix when no ratios are given.
    Sweep(Common),
    /// Time training rounds along one size axis and fit a log-log slope.
    Scaling {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 4000)]
        m: usize,
        #[arg(long, default_value_t = 16)]
        f: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value = "fedavg")]
        algorithm: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a raw.jsonl file into tidy plot data.
    Plotdata {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        #[arg(long, default_value = "algorithm")]
        series: String,
        #[arg(long)]
        final_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum AxisArg {
    N,
    M,
    F,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => {
            let config = c.load()?;
            let graph = build_graph(&config, config.seeds[0])?;
            save_bundle(&graph, c.out_dir(&config))
        }
        Command::Partition(c) => {
            let config = c.load()?;
            let seed = config.seeds[0];
            let graph = build_graph(&config, seed)?;
            save_shards(&build_shards(&config, &graph, seed)?, c.out_dir(&config))
        }
        Command::Run(c) => {
            let mut config = c.load()?;
            config.output = Some(c.out_dir(&config));
            let table = run_experiment(&config, c.workers)?;
            print!("{}", table.summary_csv()?);
            Ok(())
        }
        Command::Sweep(c) => {
            let mut config = c.load()?;
            config.output = Some(c.out_dir(&config));
            if config.perturb.as_ref().is_some_and(|p| !p.ratios.is_empty()) {
                let result = run_sweep(&config, c.workers)?;
                print!("{}", mmfgl::runner::sweep_csv(&result.points)?);
            } else {
                print!("{}", run_matrix(&config, c.workers)?.summary_csv()?);
            }
            Ok(())
        }
        Command::Scaling {
            axis,
            values,
            n,
            m,
            f,
            layers,
            repeats,
            algorithm,
            out,
        } => {
            let algorithm: Algorithm = serde_json::from_value(serde_json::Value::String(algorithm))?;
            let grid = ScalingGrid {
                axis: match axis {
                    AxisArg::N => ScalingAxis::N,
                    AxisArg::M => ScalingAxis::M,
                    AxisArg::F => ScalingAxis::F,
                },
                values,
                n,
                m,
                f,
                layers,
                repeats,
                seed: 0,
            };
            let result = measure_scaling(algorithm, &grid)?;
            let json = serde_json::to_string_pretty(&result)?;
            match out {
                Some(path) => write_atomic(&path, json.as_bytes()),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
        Command::Plotdata {
            raw,
            x,
            y,
            series,
            final_only,
            out,
        } => {
            let rows = read_raw(raw)?;
            let spec = PlotSpec { x, y, series, final_only };
            let csv = plotdata_csv(&emit_plotdata(&rows, &spec)?)?;
            match out {
                Some(path) => write_atomic(&path, csv.as_bytes()),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}

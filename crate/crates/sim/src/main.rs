use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use demandplan_sim::chart::emit_chart;
use demandplan_sim::experiments::{run_cell_switching, run_interference, run_plan, Outputs};
use demandplan_sim::io::{ingest_milan, read_demands, series_to_csv, IngestOptions};
use demandplan_sim::sweep::SweepResult;
use demandplan_sim::{ExperimentConfig, Result, SimError};

const EXIT_VIOLATIONS: u8 = 4;

#[derive(Parser)]
#[command(name = "dpsim", version, about = "Demand-shaping experiments for cellular networks")]
struct Cli {
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs a compression-ratio sweep.
    Simulate {
        #[command(subcommand)]
        experiment: Experiment,
    },
    /// Labels, plans and reschedules a demand file.
    Plan {
        /// Configuration file, or `preset:<name>`.
        #[arg(long)]
        config: String,
        #[arg(long)]
        demands: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Converts raw traffic records into a demand CSV.
    Ingest {
        #[command(subcommand)]
        source: IngestSource,
    },
    /// Renders a sweep CSV as an SVG line chart.
    Chart {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "compression ratio")]
        x_label: String,
        #[arg(long, default_value = "value")]
        y_label: String,
    },
}

#[derive(Subcommand)]
enum Experiment {
    CellSwitching {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Interference {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum IngestSource {
    /// Tab-separated Telecom Italia Milan CDR records.
    Milan {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        squares: u32,
        #[arg(long, default_value_t = 1)]
        stations: u32,
        #[arg(long, default_value_t = 1e6)]
        scale_bits_per_unit: f64,
        #[arg(long, default_value_t = 1)]
        slot_hours: u32,
    },
}

fn load(spec: &str, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(spec)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(outputs: &Outputs, dir: &std::path::Path, quiet: bool) -> Result<()> {
    outputs.write_to(dir)?;
    if !quiet {
        for f in &outputs.files {
            eprintln!("wrote {}", dir.join(&f.name).display());
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { experiment } => {
            let (outputs, dir) = match experiment {
                Experiment::CellSwitching { config, out } => {
                    let cfg = load(&config, cli.seed)?;
                    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
                    (run_cell_switching(&cfg)?.outputs, dir)
                }
                Experiment::Interference { config, out } => {
                    let cfg = load(&config, cli.seed)?;
                    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
                    (run_interference(&cfg)?.outputs, dir)
                }
            };
            emit(&outputs, &dir, cli.quiet)?;
            Ok(0)
        }
        Command::Plan { config, demands, out } => {
            let cfg = load(&config, cli.seed)?;
            let demands = read_demands(&demands)?;
            let outcome = run_plan(&cfg, &demands)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            emit(&outcome.outputs, &dir, cli.quiet)?;
            if outcome.violations.is_empty() {
                Ok(0)
            } else {
                let ids: Vec<String> = outcome.violations.iter().map(|(id, _)| id.to_string()).collect();
                println!("error kind=deadline_violation count={} demands={}", ids.len(), ids.join(","));
                Ok(EXIT_VIOLATIONS)
            }
        }
        Command::Ingest {
            source: IngestSource::Milan { input, out, squares, stations, scale_bits_per_unit, slot_hours },
        } => {
            let opts = IngestOptions { n_squares: squares, n_stations: stations, scale_bits_per_unit, slot_hours };
            let agg = ingest_milan(&input, &opts)?;
            let csv = series_to_csv(&agg.series)?;
            std::fs::write(&out, csv).map_err(|e| SimError::io(&out, e))?;
            if !cli.quiet {
                let unmapped: usize = agg.unmapped.values().sum();
                eprintln!("wrote {} ({} stations, {unmapped} unmapped records)", out.display(), agg.series.len());
            }
            Ok(0)
        }
        Command::Chart { input, out, x_label, y_label } => {
            let sweep = SweepResult::read(&input)?;
            emit_chart(&sweep, &out, &x_label, &y_label)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or("").replace('"', "\\\"");
            println!("error kind=usage message=\"{first}\"");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            println!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use soundboard::analysis::MetricsRecord;
use soundboard::experiment::{
    analyze_wavs, prepare_board, run_aging_experiment, run_statics_experiment, simulate_station,
    Damping, ExperimentSpec, StationFilter,
};
use soundboard::geometry::{write_thickness_csv, StationId};
use soundboard::{Error, Result};

/// Harpsichord soundboard simulations.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Station filter: `all`, or items like `8`, `4:1-20`, `8:26`.
    #[arg(long)]
    stations: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Coarse grid and short signals.
    #[arg(long)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Interpolate the thickness samples and write the nodal map.
    Thickness(Common),
    /// Simulate a single station.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Station, e.g. `8:26`.
        #[arg(long)]
        station: String,
        /// Decrement per step.
        #[arg(long, conflicts_with = "t60")]
        gamma: Option<f64>,
        /// Target decay time in seconds, calibrated at the station.
        #[arg(long)]
        t60: Option<f64>,
    },
    /// Damping sweep over all selected stations.
    Aging(Common),
    /// String-load cases and stress summary.
    Statics(Common),
    /// Metrics from existing WAV files.
    Analyze {
        /// WAV files or directories containing them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::from_path(&common.config)?;
    if let Some(out) = &common.out {
        spec.out = out.clone();
    }
    if let Some(filter) = &common.stations {
        spec.stations = filter.parse::<StationFilter>()?;
    }
    if let Some(jobs) = common.jobs {
        spec.jobs = jobs;
    }
    spec.desk_scale |= common.desk_scale;
    Ok(spec)
}

fn wav_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = std::fs::read_dir(input).map_err(|e| Error::io(input, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(input, e))?.path();
                if path.extension().is_some_and(|x| x == "wav") {
                    files.push(path);
                }
            }
        } else {
            files.push(input.clone());
        }
    }
    files.sort();
    Ok(files)
}

/// Returns true when some station did not finish.
fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Thickness(common) => {
            let spec = load(&common)?;
            let board = prepare_board(&spec)?;
            std::fs::create_dir_all(&spec.out).map_err(|e| Error::io(&spec.out, e))?;
            let path = spec.out.join("thickness_map.csv");
            write_thickness_csv(&board.thickness, &path)?;
            println!(
                "{}: {} nodes, {:.2} to {:.2} mm",
                path.display(),
                board.thickness.in_mask().count(),
                board.thickness.min_in_mask() * 1e3,
                board.thickness.max_in_mask() * 1e3
            );
            Ok(false)
        }
        Command::Simulate {
            common,
            station,
            gamma,
            t60,
        } => {
            let spec = load(&common)?;
            let station: StationId = station.parse()?;
            let damping = match (gamma, t60) {
                (Some(g), _) => Damping::Gamma(g),
                (None, Some(t)) => Damping::T60(t),
                (None, None) => Damping::T60(spec.targets[0]),
            };
            let (ir, gamma, path) = simulate_station(&spec, station, damping)?;
            println!(
                "{}: {} samples at {} Hz, gamma {gamma:.8}",
                path.display(),
                ir.samples.len(),
                ir.rate
            );
            Ok(false)
        }
        Command::Aging(common) => {
            let report = run_aging_experiment(&load(&common)?)?;
            print!(
                "{}",
                std::fs::read_to_string(report.out.join("report.txt")).unwrap_or_default()
            );
            Ok(report.is_partial())
        }
        Command::Statics(common) => {
            let report = run_statics_experiment(&load(&common)?)?;
            print!(
                "{}",
                std::fs::read_to_string(report.out.join("report.txt")).unwrap_or_default()
            );
            Ok(false)
        }
        Command::Analyze { inputs, out } => {
            let rows = analyze_wavs(&wav_inputs(&inputs)?)?;
            let records: Vec<MetricsRecord> = rows.iter().map(MetricsRecord::from).collect();
            let sink: Box<dyn std::io::Write> = match &out {
                Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?),
                None => Box::new(std::io::stdout()),
            };
            let mut w = csv::Writer::from_writer(sink);
            for r in &records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(out.unwrap_or_default(), e))?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

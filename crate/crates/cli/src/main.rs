//! `reach`: generate template libraries, plan, simulate and calibrate single
//! movements, and run full calibration experiments.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reach_core::{Error, Vec2};

#[derive(Debug, Parser)]
#[command(
    name = "reach",
    version,
    about = "Muscle-driven planar reaching simulator"
)]
pub struct Cli {
    /// Arm parameter file (JSON); the built-in arm when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub arm: Option<PathBuf>,

    /// Seed for template generation and target sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Format of results printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct MovementArgs {
    /// Template library file.
    #[arg(long, value_name = "FILE")]
    pub library: PathBuf,

    /// Target hand position `x,y` in metres (shoulder frame).
    #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true)]
    pub target: Vec2,

    /// Number of templates to blend.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub templates: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded template library.
    GenTemplates {
        #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        /// Upper bound of the random excitation amplitudes.
        #[arg(long, default_value_t = 0.6)]
        max_amplitude: f64,
        /// Output file name inside --out.
        #[arg(long, default_value = "library.json")]
        name: String,
    },
    /// Blend the nearest templates for a target.
    Plan {
        #[command(flatten)]
        movement: MovementArgs,
    },
    /// Simulate a planned movement, or a bump excitation with explicit amplitudes.
    Simulate {
        #[arg(long, value_name = "FILE", requires = "target")]
        library: Option<PathBuf>,
        #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true, requires = "library")]
        target: Option<Vec2>,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        templates: u64,
        /// Six comma-separated peak excitations, muscle order
        /// BIClong,BICshort,BRA,TRIlat,TRImed,TRIlong.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            conflicts_with = "library"
        )]
        amplitudes: Option<Vec<f64>>,
        /// Also write the hand trajectory to trajectory.csv inside --out.
        #[arg(long)]
        trajectory: bool,
    },
    /// Calibrate one movement off-line, optionally after an online correction.
    Calibrate {
        #[command(flatten)]
        movement: MovementArgs,
        /// Smallest gain tried.
        #[arg(long, default_value_t = 0)]
        n_min: u32,
        /// Largest gain tried.
        #[arg(long, default_value_t = 20)]
        n_max: u32,
        /// Online model applied before execution.
        #[arg(long, value_name = "FILE")]
        online_model: Option<PathBuf>,
        /// Calibration log (JSON lines) the record is appended to.
        #[arg(long, value_name = "FILE")]
        records: Option<PathBuf>,
        /// Refit the online model on the whole log and write it to --online-model.
        #[arg(long, requires_all = ["records", "online_model"])]
        refit: bool,
        #[arg(long, default_value_t = reach_core::calibration::DEFAULT_RIDGE_LAMBDA)]
        ridge_lambda: f64,
    },
    /// Run the full plan / off-line / online experiment.
    Experiment {
        /// Experiment configuration (JSON); defaults when omitted.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
        /// Override the number of online rounds.
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Turn an experiment report into a plot-ready CSV.
    PlotData {
        /// Report JSON written by `experiment`.
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
    },
}

fn parse_vec2(text: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("expected `x,y`, got `{text}`"));
    }
    let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let p = Vec2::new(parse(parts[0])?, parse(parts[1])?);
    if !p.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(p)
}

/// Process exit codes.
pub mod exit {
    pub const CONFIG: u8 = 2;
    pub const SIMULATION: u8 = 3;
    pub const SCHEMA: u8 = 4;
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(core) = err.chain().find_map(|e| e.downcast_ref::<Error>()) else {
        return exit::CONFIG;
    };
    match core {
        Error::Simulation { .. }
        | Error::VelocityDomain { .. }
        | Error::NonPositiveFiberLength { .. }
        | Error::DegenerateGeometry(_)
        | Error::RankDeficient => exit::SIMULATION,
        Error::Schema { .. } | Error::HashMismatch { .. } => exit::SCHEMA,
        _ => exit::CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

mod commands;
mod config;
mod error;
mod plot;

use clap::{Args, Parser, Subcommand};
use config::{NavMode, RunConfig, CONFIG_HELP};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Learned vehicle speed from IMU windows and speed-aided dead reckoning on
/// synthetic drives.
#[derive(Debug, Parser)]
#[command(name = "imuspeed", version, after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run config; defaults apply to missing keys.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; created if needed.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides sim.seed, model.seed and train.seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate drives: writes <id>.imu.csv, <id>.fix.csv and <id>.truth.csv.
    #[command(after_help = CONFIG_HELP)]
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Label and window drive logs into dataset.bin.
    #[command(after_help = CONFIG_HELP)]
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Drive IMU logs (*.imu.csv) or directories holding them.
        #[arg(long, value_name = "PATHS", num_args = 1.., required = true)]
        drives: Vec<PathBuf>,
    },
    /// Train the speed model: writes model.bin and history.csv.
    #[command(after_help = CONFIG_HELP)]
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by `prepare`.
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// Compare model and integrated-acceleration speed with GNSS speed:
    /// writes <id>.speed.csv and evaluation.csv.
    #[command(after_help = CONFIG_HELP)]
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATHS", num_args = 1.., required = true)]
        drives: Vec<PathBuf>,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Dead reckoning: writes <id>.<mode>.nav.csv with pose, speed and,
    /// when truth is logged, position error.
    #[command(after_help = CONFIG_HELP)]
    Nav {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATHS", num_args = 1.., required = true)]
        drives: Vec<PathBuf>,
        /// Weights for aided mode.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Speed source; overrides nav.mode.
        #[arg(long, value_enum)]
        mode: Option<NavMode>,
    },
    /// Plot columns of CSV series files as SVG plus the plotted table.
    #[command(after_help = CONFIG_HELP)]
    Plot {
        #[command(flatten)]
        common: Common,
        /// Series files with a header row.
        #[arg(required = true)]
        series: Vec<PathBuf>,
        /// X column by name (default: first column).
        #[arg(long)]
        x: Option<String>,
        /// Y columns by name (default: all others).
        #[arg(long, value_delimiter = ',')]
        y: Vec<String>,
        /// Output file stem (default: first input's stem).
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        title: Option<String>,
        /// Equal scale on both axes, for trajectories.
        #[arg(long)]
        equal_axes: bool,
    },
}

fn config_for(common: &Common) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::load(common.config.as_deref())?.with_seed(common.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common } => commands::simulate(&config_for(&common)?, &common.out),
        Command::Prepare { common, drives } => {
            commands::prepare(&config_for(&common)?, &drives, &common.out)
        }
        Command::Train { common, dataset } => {
            commands::train(&config_for(&common)?, &dataset, &common.out)
        }
        Command::Evaluate {
            common,
            drives,
            model,
        } => commands::evaluate(&config_for(&common)?, &drives, &model, &common.out),
        Command::Nav {
            common,
            drives,
            model,
            mode,
        } => {
            let cfg = config_for(&common)?;
            let mode = mode.unwrap_or(cfg.nav.mode);
            commands::nav(&cfg, &drives, model.as_deref(), mode, &common.out)
        }
        Command::Plot {
            common,
            series,
            x,
            y,
            name,
            title,
            equal_axes,
        } => {
            let args = commands::PlotArgs {
                inputs: &series,
                x: x.as_deref(),
                y: &y,
                name: name.as_deref(),
                title: title.as_deref(),
                equal_axes,
            };
            commands::plot(&config_for(&common)?, &args, &common.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IMUSPEED_LOG", "info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("imuspeed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

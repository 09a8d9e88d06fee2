//! `isvd-chart` command line: calibrate, monitor, simulate, bench.
//!
//! Exit codes: 0 success, 2 malformed input or configuration, 3 calibration
//! failure, 4 stream inconsistent with the calibration.

mod bench;
mod calibrate;
mod error;
mod monitor;
mod records;
mod simulate;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use bench::{parse_dims, BenchArgs};
pub use calibrate::{CalibrateConfig, CalibrationFile};
pub use error::CliError;
pub use monitor::{AlarmSummary, MonitorArgs};
pub use records::{read_records, StreamRecord};
pub use simulate::{ExperimentConfig, SetupRef};

#[derive(Debug, Parser)]
#[command(
    name = "isvd-chart",
    version,
    about = "Online cross-covariance monitoring with an incremental SVD chart"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate Σ₀ from in-control history and search the control limit.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines file of in-control stream records.
        #[arg(long)]
        historical: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Means::Zero)]
        means: Means,
    },
    /// Run the chart over a JSON-lines stream, writing CSV rows to stdout.
    Monitor(MonitorArgs),
    /// Run simulation setups and write CSV/JSON results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Time the incremental and dense charts.
    Bench(BenchArgs),
}

/// How observation means are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Means {
    /// Observations are already centered.
    Zero,
    /// Subtract the means estimated from the historical data.
    Subtract,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Calibrate {
            config,
            historical,
            output,
            means,
        } => calibrate::cmd_calibrate(&config, &historical, &output, means),
        Command::Monitor(args) => {
            let stdout = std::io::stdout();
            monitor::cmd_monitor(&args, &mut stdout.lock())
        }
        Command::Simulate { config, output_dir } => simulate::cmd_simulate(&config, &output_dir),
        Command::Bench(args) => bench::cmd_bench(&args),
    }
}

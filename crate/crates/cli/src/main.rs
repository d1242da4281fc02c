use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use fourwis::calib::Method;
use fourwis::filter::FilterKind;
use fourwis_cli::commands::{cmd_calibrate, cmd_compare, cmd_estimate, cmd_simulate};
use fourwis_cli::config::RunConfig;
use fourwis_cli::dataset::resolve_out_dir;

/// Odometry calibration and pose-estimation workflow for a 4WIS4WID mobile
/// robot: simulate datasets, calibrate kinematic parameters, run pose
/// estimators, and compare their traces.
#[derive(Parser)]
#[command(name = "fourwis", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master random seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also settable via FOURWIS_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum MethodArg {
    Lm,
    InteriorPoint,
    Ga,
    Pso,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lm => Method::Lm,
            MethodArg::InteriorPoint => Method::InteriorPoint,
            MethodArg::Ga => Method::Ga,
            MethodArg::Pso => Method::Pso,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum FilterArg {
    Odom,
    Ekf,
    Ukf,
}

impl From<FilterArg> for FilterKind {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Odom => FilterKind::OdomOnly,
            FilterArg::Ekf => FilterKind::Ekf,
            FilterArg::Ukf => FilterKind::Ukf,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic calibration dataset (6 kinds x 5 repetitions).
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Wall mode: activate the gravity drift on the true motion.
        #[arg(long)]
        wall: bool,
    },
    /// Calibrate kinematic parameters on a dataset.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory (from `simulate`).
        #[arg(long)]
        dataset: PathBuf,
        /// Optimizer backend.
        #[arg(long, value_enum, default_value = "lm")]
        method: MethodArg,
    },
    /// Run a pose estimator over every recording of a dataset.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory (from `simulate`).
        #[arg(long)]
        dataset: PathBuf,
        /// Estimator to run.
        #[arg(long, value_enum, default_value = "ekf")]
        filter: FilterArg,
        /// Kinematic parameters JSON (e.g. params_calibrated.json); the
        /// config's robot parameters when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Compare estimator traces against their truth columns.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace CSV files produced by `estimate`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn run() -> Result<(), fourwis_cli::CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common, wall } => {
            let config = RunConfig::load(common.config.as_deref())?;
            let out = resolve_out_dir(common.out.as_deref(), &config.output.dir);
            let s = cmd_simulate(&config, &out, wall, common.seed)?;
            println!(
                "wrote {} recordings ({} frames, seed {}{}) to {}",
                s.recordings,
                s.frames,
                s.master_seed,
                if s.wall { ", wall mode" } else { "" },
                s.out_dir.display()
            );
        }
        Command::Calibrate {
            common,
            dataset,
            method,
        } => {
            let config = RunConfig::load(common.config.as_deref())?;
            let out = resolve_out_dir(common.out.as_deref(), &config.output.dir);
            let s = cmd_calibrate(&dataset, method.into(), &config, &out, common.seed)?;
            println!(
                "{:?} {:?}: cost {:.6e} -> {:.6e} in {} iterations ({} evaluations, {:.2?}); report in {}",
                s.method,
                s.status,
                s.initial_cost,
                s.final_cost,
                s.iterations,
                s.evaluations,
                s.wall_time,
                s.out_dir.display()
            );
        }
        Command::Estimate {
            common,
            dataset,
            filter,
            params,
        } => {
            let config = RunConfig::load(common.config.as_deref())?;
            let out = resolve_out_dir(common.out.as_deref(), &config.output.dir);
            let s = cmd_estimate(&dataset, params.as_deref(), filter.into(), &config, &out)?;
            println!(
                "wrote {} {} traces to {}",
                s.traces,
                s.filter.name(),
                s.out_dir.display()
            );
        }
        Command::Compare { common, traces } => {
            let config = RunConfig::load(common.config.as_deref())?;
            let out = resolve_out_dir(common.out.as_deref(), &config.output.dir);
            let s = cmd_compare(&traces, &out)?;
            println!(
                "compared {} traces over [{:.3}, {:.3}]; summary in {}",
                s.stats.len(),
                s.overlap.0,
                s.overlap.1,
                s.out_dir.display()
            );
            for row in &s.stats {
                println!(
                    "  {:<40} final {:.5e}  rms {:.5e}  max {:.5e}",
                    row.name,
                    row.final_position_error,
                    row.rms_position_error,
                    row.max_position_error
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

//! `latent-lob`: command-line front end for the latent order book model.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{calibrate::CalibrateJob, impact::ImpactJob, map::MapJob, simulate::SimulateJob, stationary};
use run::{drive, CliError, Global};

#[derive(Parser)]
#[command(name = "latent-lob", version, about = "Latent/revealed limit order book model")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON configuration; fields left out take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary book from a closed form or the solver.
    Stationary {
        #[arg(long, value_enum)]
        mode: Option<stationary::Mode>,
        #[arg(long)]
        k_ll: Option<f64>,
        /// `ℓ_r/ℓ_ℓ`
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// Particle simulation of the full dynamics.
    Simulate {
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        members: Option<usize>,
    },
    /// Stability map and critical line.
    Map {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Metaorder impact experiment.
    Impact {
        /// Volume per unit time; negative sells.
        #[arg(long, allow_negative_numbers = true)]
        rate: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        members: Option<usize>,
    },
    /// Fit the model to order book snapshot files.
    Calibrate {
        snapshots: Vec<PathBuf>,
        /// Bin width in percent of the price.
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        solver_points: Option<usize>,
        #[arg(long)]
        stock: Option<String>,
        #[arg(long)]
        daily_volume: Option<f64>,
    },
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let a = cli.global;
    let g = Global { config: a.config, out: a.out, seed: a.seed, workers: a.workers, dry_run: a.dry_run };
    match cli.command {
        Command::Stationary { mode, k_ll, ratio, points } => drive(&g, |j: &mut stationary::StationaryJob| {
            set(&mut j.mode, mode);
            set(&mut j.k_ll, k_ll);
            set(&mut j.ratio, ratio);
            set(&mut j.solver.n_points, points);
        }),
        Command::Simulate { steps, members } => drive(&g, |j: &mut SimulateJob| {
            set(&mut j.sim.n_steps, steps);
            set(&mut j.members, members);
        }),
        Command::Map { points } => drive(&g, |j: &mut MapJob| set(&mut j.solver.n_points, points)),
        Command::Impact { rate, duration, members } => drive(&g, |j: &mut ImpactJob| {
            set(&mut j.metaorder.rate, rate);
            set(&mut j.metaorder.duration, duration);
            set(&mut j.members, members);
        }),
        Command::Calibrate { snapshots, bin_width, starts, solver_points, stock, daily_volume } => {
            drive(&g, |j: &mut CalibrateJob| {
                if !snapshots.is_empty() {
                    j.snapshots = snapshots;
                }
                set(&mut j.binning.bin_width, bin_width);
                set(&mut j.fit.starts, starts);
                set(&mut j.solver.n_points, solver_points);
                set(&mut j.stock, stock);
                if daily_volume.is_some() {
                    j.daily_volume = daily_volume;
                }
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latent-lob: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

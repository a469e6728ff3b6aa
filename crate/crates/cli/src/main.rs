use std::path::PathBuf;
use std::process::ExitCode;

use bisweep::harness::{self, ConfigOverrides, ExperimentConfig};
use bisweep::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bisweep", version, about = "Bisweep EIT simulation and factorization-method reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate bisweep data and write the matrix, mesh and map cache
    Simulate(Common),
    /// Reconstruct inclusions from a bisweep CSV
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Bisweep matrix to invert
        #[arg(long)]
        data: PathBuf,
    },
    /// Dense noiseless simulation followed by reconstruction
    Example1(Common),
    /// Perturbed geometry, noisy samples and sweep profiles
    Example2 {
        #[command(flatten)]
        common: Common,
        /// Skip the sweep-profile simulations
        #[arg(long)]
        no_sweep: bool,
    },
    /// Sweep profile with the first electrode fixed
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "mesh-h")]
    mesh_h: Option<f64>,
    #[arg(long = "order", value_name = "M")]
    order: Option<usize>,
    #[arg(long = "dipoles", value_name = "N_D")]
    dipoles: Option<usize>,
    #[arg(long, value_name = "LEVEL")]
    noise: Option<f64>,
    #[arg(long, value_name = "MAG")]
    perturb: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "RES")]
    grid: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self, preset: ExperimentConfig) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => preset,
        };
        cfg.apply(&ConfigOverrides {
            electrodes: self.n,
            mesh_h: self.mesh_h,
            order: self.order,
            dipoles: self.dipoles,
            noise: self.noise,
            perturb: self.perturb,
            seed: self.seed,
            grid: self.grid,
            out: self.out.clone(),
        });
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => {
            let out = harness::cmd_simulate(&c.config(ExperimentConfig::default())?)?;
            println!("max |ς| = {:.6e}", out.clean.max_abs());
        }
        Command::Reconstruct { common, data } => {
            let grid = harness::cmd_reconstruct(&common.config(ExperimentConfig::default())?, &data)?;
            println!("{} samples, {} excluded by the guard radius", grid.values().count(), grid.excluded);
        }
        Command::Example1(c) => {
            let (data, _) = harness::cmd_example1(&c.config(ExperimentConfig::example1())?)?;
            println!("max |ς| = {:.6e}", data.max_abs());
        }
        Command::Example2 { common, no_sweep } => {
            let out = harness::cmd_example2(&common.config(ExperimentConfig::example2())?, !no_sweep)?;
            println!("{} reconstructions written", out.reconstructions.len());
        }
        Command::Sweep(c) => {
            let prof = harness::cmd_sweep(&c.config(ExperimentConfig::default())?)?;
            println!("{} sweep samples written", prof.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{:?}]: {e}", e.category());
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}

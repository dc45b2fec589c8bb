//! Command-line front end. `run` parses arguments, dispatches and maps
//! failures to exit codes: 0 success, 1 failed verification, 2 bad input,
//! 3 numerical failure.

mod commands;
mod output;
mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};

pub use output::Manifest;

#[derive(Parser, Debug)]
#[command(name = "contpop", version, about = "Spatial birth-death process with competition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run replicas of the stochastic process and write snapshots and estimates.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: SimulateArgs,
    },
    /// Integrate the truncated correlation hierarchy.
    Hierarchy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: HierarchyArgs,
    },
    /// Evaluate the exact competition-free density.
    Surgailis {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: SurgailisArgs,
    },
    /// Evaluate closed-form bounds and the continuation schedule.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: BoundsArgs,
    },
    /// Cross-check a finished simulate run.
    Verify(VerifyArgs),
    /// Rerun an experiment from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "CONTPOP_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for replica parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HierarchyArgs {
    #[arg(long)]
    pub closure: Option<String>,
    #[arg(long)]
    pub nmax: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Grid nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(skip)]
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurgailisArgs {
    /// Comma-separated output times.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Output nodes per axis.
    #[arg(long)]
    pub nodes: Option<usize>,
}

#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundsArgs {
    /// Number of continuation steps.
    #[arg(long)]
    pub schedule: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Iterate the schedule until its partial sum passes this horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Moment orders and end time, e.g. `--moment-system 4 10`.
    #[arg(long, num_args = 2, value_names = ["L", "T_END"])]
    pub moment_system: Option<Vec<f64>>,
    #[arg(long)]
    pub theta_norm: Option<f64>,
}

#[derive(Args, Clone, Debug)]
pub struct VerifyArgs {
    /// Output directory of a simulate run.
    #[arg(long)]
    pub run: PathBuf,
    /// Config to check against; defaults to the one named in the manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Where to write verify.json; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Clone, Debug)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("contpop: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

pub fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Simulate { common, args } => commands::simulate(&common, args).map(|_| 0),
        Command::Hierarchy { common, args } => commands::hierarchy(&common, args).map(|_| 0),
        Command::Surgailis { common, args } => commands::surgailis(&common, args).map(|_| 0),
        Command::Bounds { common, args } => commands::bounds(&common, args).map(|_| 0),
        Command::Verify(args) => verify::verify(&args),
        Command::Replay(args) => replay(&args),
    }
}

fn replay(args: &ReplayArgs) -> Result<i32> {
    let manifest = Manifest::read(&args.manifest)?;
    let common = Common {
        config: manifest.config.clone(),
        out: args.out.clone(),
        seed: manifest.seed,
        threads: args.threads,
    };
    load_checked(&manifest.config, &manifest.config_hash)?;
    let params = manifest.params.clone();
    let parse = |what: &str| Error::Config(format!("manifest parameters for {what} are malformed"));
    match manifest.subcommand.as_str() {
        "simulate" => commands::simulate(&common, serde_json::from_value(params).map_err(|_| parse("simulate"))?),
        "hierarchy" => commands::hierarchy(&common, serde_json::from_value(params).map_err(|_| parse("hierarchy"))?),
        "surgailis" => commands::surgailis(&common, serde_json::from_value(params).map_err(|_| parse("surgailis"))?),
        "bounds" => commands::bounds(&common, serde_json::from_value(params).map_err(|_| parse("bounds"))?),
        other => Err(Error::Config(format!("manifest names unknown subcommand {other:?}"))),
    }
    .map(|_| 0)
}

/// Loads a config and refuses it if its hash differs from `expected`.
fn load_checked(path: &Path, expected: &str) -> Result<Config> {
    let config = Config::load(path)?;
    if config.hash != expected {
        return Err(Error::Config(format!(
            "config {} has hash {}, manifest expects {expected}",
            path.display(),
            config.hash
        )));
    }
    Ok(config)
}

/// Runs `f` on a dedicated pool when a thread count is given.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build a pool of {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

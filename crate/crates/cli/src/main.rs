//! `apex`: track tools, parameter identification, training and evaluation.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "apex", version, about = "Scale race-car simulation, identification, PPO training and lap evaluation")]
struct Cli {
    /// Worker threads for batched stepping (1 = deterministic serial path).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, validate or resample track files.
    Track {
        #[command(subcommand)]
        cmd: TrackCmd,
    },
    /// Write a vehicle parameter file (defaults plus overrides).
    Params(ParamsArgs),
    /// Simulate a noiseless drive log from known parameters.
    SynthLog(SynthArgs),
    /// Fit vehicle parameters to a drive log.
    Sysid(SysidArgs),
    /// Train a PPO policy.
    Train(TrainArgs),
    /// Drive laps with a trained policy or the pure-pursuit baseline.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Oval,
    Lshape,
    Random,
}

#[derive(Subcommand)]
enum TrackCmd {
    Gen {
        #[arg(long, value_enum)]
        shape: Shape,
        /// Centerline length (m).
        #[arg(long, default_value_t = 17.0)]
        length: f64,
        /// Track width (m).
        #[arg(long, default_value_t = 1.0)]
        width: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    Validate {
        path: PathBuf,
        #[command(flatten)]
        opts: TrackOpts,
    },
    Resample {
        path: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: TrackOpts,
    },
}

#[derive(Args, Clone, Copy)]
struct TrackOpts {
    /// Centerline spacing after resampling (m).
    #[arg(long, default_value_t = 0.05)]
    resolution: f64,
    #[arg(long, default_value_t = 0.15)]
    vehicle_half_width: f64,
}

#[derive(Args)]
struct ParamsArgs {
    /// Start from this file instead of the defaults.
    #[arg(long)]
    from: Option<PathBuf>,
    /// Override, e.g. `--set mu=0.9`.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Multiply a parameter, e.g. `--scale mu=0.9`.
    #[arg(long = "scale", value_name = "NAME=FACTOR")]
    scale: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    params: Option<PathBuf>,
    /// Log length (s).
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SysidArgs {
    #[arg(long)]
    log: PathBuf,
    /// Initial parameters (defaults when omitted).
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// `reverse` or `fd`.
    #[arg(long)]
    gradient: Option<String>,
    /// Comma-separated parameter names to fit.
    #[arg(long)]
    fit: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnvArgs {
    /// Environment config file.
    #[arg(long)]
    env_config: Option<PathBuf>,
    /// Track file (overrides the config; a 17 m × 1 m oval when unset).
    #[arg(long)]
    track: Option<PathBuf>,
    /// Vehicle parameter file (overrides the config).
    #[arg(long)]
    params: Option<PathBuf>,
    /// obs-s, wheel-speed, no-actuators, dr-friction-<σ> or dr-all-<σ>.
    #[arg(long)]
    ablation: Option<String>,
    /// Environment override, e.g. `--env sigma_dr=0.05`.
    #[arg(long = "env", value_name = "KEY=VALUE")]
    env_set: Vec<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long)]
    ppo_config: Option<PathBuf>,
    /// Start from the laptop-scale preset (16 envs × 256 steps, 2M steps).
    #[arg(long)]
    desk: bool,
    /// Total environment-step budget.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from a checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// PPO override, e.g. `--ppo lr_start=3e-4`.
    #[arg(long = "ppo", value_name = "KEY=VALUE")]
    ppo_set: Vec<String>,
    #[arg(long)]
    quiet: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    baseline: bool,
    #[arg(long, default_value_t = 20)]
    laps: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep parameter randomization on during evaluation.
    #[arg(long)]
    keep_randomization: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code: 1 at runtime, 2 for usage or configuration.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<apex_core::Error> for CliError {
    fn from(e: apex_core::Error) -> Self {
        use apex_core::Error::*;
        match e {
            Usage(_) | Config(_) | Parse { .. } => Self::usage(e.to_string()),
            _ => Self::runtime(e.to_string()),
        }
    }
}

/// Errors while reading inputs; missing or unreadable files are usage errors.
pub fn input<T>(r: apex_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        apex_core::Error::Io { .. } => CliError::usage(e.to_string()),
        other => other.into(),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Track { cmd } => commands::track(cmd),
        Command::Params(a) => commands::params(a),
        Command::SynthLog(a) => commands::synth_log(a),
        Command::Sysid(a) => commands::sysid(a, cli.threads),
        Command::Train(a) => commands::train(a, cli.threads),
        Command::Eval(a) => commands::eval(a, cli.threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message.replace('\n', " "));
            ExitCode::from(e.code)
        }
    }
}

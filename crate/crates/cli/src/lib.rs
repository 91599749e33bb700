//! The `treewalk` command-line tool: configuration, experiment dispatch and
//! reproducible artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};

use config::{Config, ConfigError};
use output::{Artifacts, Manifest, Versions, DEFAULT_OUTPUT, OUTPUT_ENV};

#[derive(Debug, Parser)]
#[command(name = "treewalk", version, about = "Random walks in random environment on Galton-Watson trees")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides the config and $TREEWALK_OUT.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    CheckEnv,
    SimulateWalk,
    Reduce,
    Heights,
    SpineSample,
    Eigen,
    Verify,
    Tails,
    Scaling,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::CheckEnv => "check-env",
            Command::SimulateWalk => "simulate-walk",
            Command::Reduce => "reduce",
            Command::Heights => "heights",
            Command::SpineSample => "spine-sample",
            Command::Eigen => "eigen",
            Command::Verify => "verify",
            Command::Tails => "tails",
            Command::Scaling => "scaling",
        }
    }
}

/// Why a run stopped, mapped to the exit status.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Hypothesis(String),
    Budget(String),
    Internal(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Hypothesis(_) => 3,
            Failure::Budget(_) => 4,
            Failure::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Hypothesis(m) => write!(f, "hypothesis failed: {m}"),
            Failure::Budget(m) => write!(f, "budget exceeded: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<treewalk::Error> for Failure {
    fn from(e: treewalk::Error) -> Self {
        use treewalk::Error::*;
        let m = e.to_string();
        match e {
            InvalidModel(_) | InvalidArgument(_) => Failure::Config(m),
            Precondition(_) => Failure::Hypothesis(m),
            BudgetExceeded { .. } => Failure::Budget(m),
            Degenerate(_) => Failure::Internal(m),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn output_dir(cli: &Cli, cfg: &Config) -> PathBuf {
    cli.output
        .clone()
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

pub fn load(path: &Path) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(Config::parse(&text)?)
}

/// Runs one command and returns its exit status. Artifacts and the
/// manifest are written only when the command completes.
pub fn run(cli: &Cli) -> Result<i32, Failure> {
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut cfg = load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    let model = cfg.model.resolve()?;
    let dir = output_dir(cli, &cfg);
    let mut out = Artifacts::new();
    let status = treewalk::par::with_workers(cfg.workers, || -> Result<i32, Failure> {
        let f = match cli.command {
            Command::CheckEnv => commands::check_env,
            Command::SimulateWalk => commands::simulate_walk,
            Command::Reduce => commands::reduce,
            Command::Heights => commands::heights,
            Command::SpineSample => commands::spine_sample,
            Command::Eigen => commands::eigen,
            Command::Verify => commands::verify,
            Command::Tails => commands::tails,
            Command::Scaling => commands::scaling,
        };
        f(&cfg, &model, &mut out)
    })?;
    out.commit(&dir)?;
    let manifest = Manifest {
        command: cli.command.name().into(),
        schema: cfg.schema,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        workers: cfg.workers,
        versions: Versions::current(),
        started_unix,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        exit_status: status,
        artifacts: out.entries().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(status)
}

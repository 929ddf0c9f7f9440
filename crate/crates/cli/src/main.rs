//! `roughmckv` experiment driver.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{ExperimentConfig, FileConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot read config {path}: {source}")]
    ConfigRead {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("unknown experiment '{id}'; available: {available}")]
    UnknownExperiment { id: String, available: String },
    #[error("experiment '{id}' does not support '{command}'; supported: {supported}")]
    Unsupported {
        id: String,
        command: &'static str,
        supported: String,
    },
    #[error(transparent)]
    Library(#[from] roughmckv::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::ConfigRead { .. } | CliError::Usage(_) => 1,
            CliError::UnknownExperiment { .. } | CliError::Unsupported { .. } => 2,
            CliError::Library(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "roughmckv",
    version,
    about = "Rough-path and McKean-Vlasov experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Lift,
    Rde,
    Mckv,
    Fpcheck,
    Conv,
    Tail,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Lift => "lift",
            CommandKind::Rde => "rde",
            CommandKind::Mckv => "mckv",
            CommandKind::Fpcheck => "fpcheck",
            CommandKind::Conv => "conv",
            CommandKind::Tail => "tail",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Lift the experiment's noise to a rough path and report its algebraic defects.
    Lift(Common),
    /// Solve the experiment's rough differential equation.
    Rde(Common),
    /// Compute the McKean-Vlasov fixed point.
    Mckv(Common),
    /// Check the empirical law against the rough Fokker-Planck equation.
    Fpcheck(Common),
    /// Convergence table over dyadic levels or particle counts.
    Conv(Common),
    /// Accumulation-variable statistics over sampled drivers.
    Tail(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file with experiment settings; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// First stream id for per-particle Brownian draws.
    #[arg(long)]
    streams: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Particle or sample count.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Dyadic levels for convergence tables, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    /// Dyadic level of the time grid.
    #[arg(long)]
    level: Option<u32>,
}

impl Command {
    fn split(self) -> (CommandKind, Common) {
        match self {
            Command::Lift(c) => (CommandKind::Lift, c),
            Command::Rde(c) => (CommandKind::Rde, c),
            Command::Mckv(c) => (CommandKind::Mckv, c),
            Command::Fpcheck(c) => (CommandKind::Fpcheck, c),
            Command::Conv(c) => (CommandKind::Conv, c),
            Command::Tail(c) => (CommandKind::Tail, c),
        }
    }
}

fn resolve(kind: CommandKind, args: Common) -> Result<ExperimentConfig, CliError> {
    let (file, text) = match &args.config {
        Some(p) => {
            let (f, t) = config::load(p)?;
            (f, Some(t))
        }
        None => (FileConfig::default(), None),
    };
    let experiment = args.experiment.or(file.experiment).ok_or_else(|| {
        CliError::Usage("no experiment given (use --experiment or a config)".into())
    })?;
    if !roughmckv::corpus::EXPERIMENTS.contains(&experiment.as_str()) {
        return Err(CliError::UnknownExperiment {
            id: experiment,
            available: roughmckv::corpus::EXPERIMENTS.join(", "),
        });
    }
    let defaults = run::defaults(&experiment, kind);
    let cfg = ExperimentConfig {
        level: args.level.or(file.level).unwrap_or(defaults.level),
        alpha: file.alpha,
        n: args.n.or(file.n).unwrap_or(defaults.n),
        seed: args.seed.or(file.seed).unwrap_or(1),
        streams: args.streams.or(file.streams).unwrap_or(0),
        levels: args.levels.or(file.levels).unwrap_or(defaults.levels),
        replicates: file.replicates.unwrap_or(20),
        probe_set: file.probe_set.unwrap_or_else(|| "dictionary".into()),
        out: args
            .out
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out")),
        kernel: file.kernel,
        experiment,
    };
    let source = args.config.as_deref().zip(text.as_deref());
    config::validate(&cfg, source)?;
    Ok(cfg)
}

fn init_threads() {
    if let Some(n) = std::env::var("ROUGHMCKV_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let (kind, args) = cli.command.split();
    let outcome = resolve(kind, args).and_then(|cfg| run::run(kind, &cfg));
    match outcome {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

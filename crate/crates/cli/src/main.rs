//! `bipgps`: batch front end for graph generation, GPS tables, estimation
//! and simulation studies.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use config::LoadedConfig;
use error::CliError;
use output::{Format, Output};

#[derive(Parser, Debug)]
#[command(
    name = "bipgps",
    version,
    about = "Propensity-score estimation for bipartite experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration instead of --config.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Synthesize the `[graph]` and write it as an edge list.
    GraphGen,
    /// Compute the GPS table.
    Gps,
    /// Effect estimates and intervals from observed data.
    Estimate,
    /// Run the `[simulate]` study.
    Simulate,
    /// Run the `[sweep]` edges-cut study.
    Sweep,
    /// List the built-in presets.
    Presets,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GraphGen => "graph-gen",
            Command::Gps => "gps",
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Presets => "presets",
        }
    }
}

fn run(cli: &Cli) -> Result<Vec<CliError>, CliError> {
    if let Command::Presets = cli.command {
        for name in config::preset_names() {
            println!("{name}");
        }
        return Ok(Vec::new());
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg: LoadedConfig = config::load(cli.config.as_deref(), cli.preset.as_deref())?;
    let out = Output {
        dir: cli.out.clone(),
        format: cli.format,
        seed: cli.seed.or(cfg.config.seed).unwrap_or(0),
        command: cli.command.name(),
        config: &cfg,
    };
    let (written, failures) = match cli.command {
        Command::GraphGen => (commands::graph_gen(&cfg, &out)?, Vec::new()),
        Command::Gps => (commands::gps(&cfg, &out)?, Vec::new()),
        Command::Estimate => commands::estimate(&cfg, &out)?,
        Command::Simulate => (commands::simulate(&cfg, &out)?, Vec::new()),
        Command::Sweep => (commands::sweep(&cfg, &out)?, Vec::new()),
        Command::Presets => unreachable!(),
    };
    for p in written {
        info!("wrote {}", p.display());
    }
    Ok(failures)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let failures = match run(&cli) {
        Ok(f) => f,
        Err(e) => vec![e],
    };
    for e in &failures {
        eprintln!("{}", e.to_json());
    }
    match failures.first() {
        None => ExitCode::SUCCESS,
        Some(e) => ExitCode::from(e.exit_code() as u8),
    }
}

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use dcinfer::{ClassifierKind, StatisticKind};

use config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "dcinfer",
    version,
    about = "Infer hidden cascade parameters by distribution classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Base seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Summary statistic: reduced or extended
    #[arg(long, global = true)]
    stat: Option<StatisticKind>,

    /// Classifier family, e.g. svm, knn, random_forest
    #[arg(long, global = true)]
    classifier: Option<ClassifierKind>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the configured graph and write its edge list
    GraphGen,
    /// Simulate one symptom matrix at the true parameters
    Simulate,
    /// Infer parameters from simulated or supplied observations
    Infer,
    /// Repeat inference over a grid of true parameters
    Grid,
    /// Generate a synthetic trading market with planted cascades
    EmpiricalSynth,
    /// Infer announcement and regular-period parameters from trades
    EmpiricalInfer,
    /// Compare observed and simulated symptom distributions by group
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::GraphGen => "graph-gen",
            Command::Simulate => "simulate",
            Command::Infer => "infer",
            Command::Grid => "grid",
            Command::EmpiricalSynth => "empirical-synth",
            Command::EmpiricalInfer => "empirical-infer",
            Command::Report => "report",
        }
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    command: &'a str,
    kind: &'a str,
    message: String,
    violations: Vec<String>,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        parallelism: cli.parallelism,
        stat: cli.stat,
        classifier: cli.classifier,
    };
    let cfg: RunConfig = config::load(
        cli.config.as_deref(),
        config::process_env(),
        &overrides,
        matches!(cli.command, Command::EmpiricalInfer),
    )?;
    if let Some(n) = cfg.parallelism {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::GraphGen => commands::graph_gen(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Infer => commands::infer_cmd(&cfg),
        Command::Grid => commands::grid(&cfg),
        Command::EmpiricalSynth => commands::empirical_synth(&cfg),
        Command::EmpiricalInfer => commands::empirical_infer(&cfg),
        Command::Report => commands::report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, violations, code) = match err.downcast_ref::<ConfigError>() {
                Some(c) => ("config", c.violations.clone(), 2),
                None => ("runtime", Vec::new(), 1),
            };
            let record = ErrorRecord {
                command: cli.command.name(),
                kind,
                message: format!("{err:#}"),
                violations,
            };
            eprintln!(
                "{}",
                serde_json::to_string(&record).unwrap_or_else(|_| format!("{err:#}"))
            );
            ExitCode::from(code)
        }
    }
}

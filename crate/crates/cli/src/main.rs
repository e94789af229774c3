mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{Resolved, Settings, SEED_ENV};
use stages::Layout;

/// Build episodic memory from simulated episodes and evaluate memory-guided
/// object search.
#[derive(Debug, Parser)]
#[command(name = "polar", version)]
struct Cli {
    /// Flat TOML file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate worlds.
    #[command(subcommand)]
    World(WorldCommand),
    /// Generate scenario specs.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Run the acquisition episodes of every spec.
    Acquire,
    /// Distill acquisition logs into one memory graph per spec.
    Memorize,
    /// Run the evaluation episodes and write metrics.
    Eval(EvalArgs),
    /// Re-render the table from a metrics file.
    Report(ReportArgs),
    /// Scenario generation through evaluation in one go.
    RunAll(EvalArgs),
}

#[derive(Debug, Subcommand)]
enum WorldCommand {
    Gen {
        /// Where to write the world file.
        #[arg(long)]
        out: PathBuf,
        /// Also write a text map.
        #[arg(long)]
        map: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    Gen,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    /// Keep only episodes where both memory and dense retrieval found the target.
    #[arg(long)]
    only_retrieval_hits: bool,
    /// Metrics file; defaults to metrics.json in the output directory.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Table file; defaults to table.txt in the output directory.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ReportArgs {
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    table: Option<PathBuf>,
}

fn settings(cli: &Cli) -> Result<Resolved> {
    let file = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    cli.settings.clone().over(file).resolve(env_seed.as_deref())
}

fn eval(cfg: &Resolved, args: &EvalArgs) -> Result<()> {
    let layout = Layout::new(&cfg.out_dir);
    let metrics = args.metrics.clone().unwrap_or_else(|| layout.metrics());
    let table = args.table.clone().unwrap_or_else(|| layout.table());
    let text = stages::eval_stage(cfg, args.only_retrieval_hits, &metrics, &table)?;
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = settings(&cli)?;
    match &cli.command {
        Command::World(WorldCommand::Gen { out, map }) => stages::world_gen(&cfg, out, map.as_deref()),
        Command::Scenario(ScenarioCommand::Gen) => stages::scenario_gen(&cfg),
        Command::Acquire => stages::acquire_stage(&cfg),
        Command::Memorize => stages::memorize_stage(&cfg),
        Command::Eval(args) => eval(&cfg, args),
        Command::Report(args) => {
            let layout = Layout::new(&cfg.out_dir);
            let metrics = args.metrics.clone().unwrap_or_else(|| layout.metrics());
            let table = args.table.clone().unwrap_or_else(|| layout.table());
            print!("{}", stages::report_stage(&metrics, &table)?);
            Ok(())
        }
        Command::RunAll(args) => {
            stages::scenario_gen(&cfg)?;
            stages::acquire_stage(&cfg)?;
            stages::memorize_stage(&cfg)?;
            eval(&cfg, args)
        }
    }
}

fn main() -> ExitCode {
    // Usage errors exit with status 2 from inside `parse`.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::from(1)
        }
    }
}

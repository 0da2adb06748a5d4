use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hazard_twin::{run_pipeline, run_stage, PipelineConfig, Stage, TwinResult};

#[derive(Parser)]
#[command(name = "hazard-twin", version, about = "Compound-hazard digital twin of a synthetic district")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overheating hours from re-simulated indoor temperatures.
    #[arg(long, global = true)]
    resimulate_oh: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    Generate,
    Simulate,
    Sense,
    Fuse,
    Calibrate,
    Graph,
    Equity,
    Intervene,
    /// Every stage in order, then summary.json.
    Pipeline,
}

fn run(cli: &Cli) -> TwinResult<()> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.intervention.resimulate_oh |= cli.resimulate_oh;
    let dir = config.out.clone();
    let stage = match cli.command {
        Command::Generate => Stage::Generate,
        Command::Simulate => Stage::Simulate,
        Command::Sense => Stage::Sense,
        Command::Fuse => Stage::Fuse,
        Command::Calibrate => Stage::Calibrate,
        Command::Graph => Stage::Graph,
        Command::Equity => Stage::Equity,
        Command::Intervene => Stage::Intervene,
        Command::Pipeline => {
            let (runs, summary) = run_pipeline(&config, &dir)?;
            for run in &runs {
                report(run);
            }
            println!("summary: {}", dir.join(hazard_twin::stages::SUMMARY).display());
            println!("ranking by risk reduction: {}", summary.ranking.join(" > "));
            return Ok(());
        }
    };
    report(&run_stage(stage, &config, &dir)?);
    Ok(())
}

fn report(run: &hazard_twin::StageRun) {
    println!("{}: {}", run.stage.name(), run.outputs.join(", "));
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

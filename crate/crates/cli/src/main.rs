use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use podns::config::RunConfig;
use podns::pipeline::{Run, Stage};

/// Navier-Stokes POD-ROM pipeline.
///
/// Stages read and write PODNS1 containers and CSV files in the output
/// directory. Select a stage either as a subcommand or with `--stage`.
#[derive(Debug, Parser)]
#[command(name = "podns", version)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML run configuration; problem defaults are used without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Stage to run, as an alternative to the subcommand.
    #[arg(long, global = true)]
    stage: Option<String>,

    /// Include the large levels in `sweep` (hours of runtime).
    #[arg(long, global = true)]
    full: bool,

    /// Output directory, overriding `output.dir` of the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Run the full order model and store the snapshots.
    Fom,
    /// Compute velocity and pressure POD bases.
    Pod,
    /// Run the reduced velocity model.
    Rom,
    /// Recover reduced pressures with SE and/or SM.
    Pressure,
    /// Compute error norms and cylinder quantities.
    Errors,
    /// Collect errors below the output directory into convergence.csv.
    Report,
    /// Run the configured grid of levels, viscosities and grad-div parameters.
    Sweep,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Fom => Stage::Fom,
            Command::Pod => Stage::Pod,
            Command::Rom => Stage::Rom,
            Command::Pressure => Stage::Pressure,
            Command::Errors => Stage::Errors,
            Command::Report => Stage::Report,
            Command::Sweep => Stage::Sweep,
        }
    }
}

fn run(cli: Cli) -> Result<String, String> {
    let flag = cli.stage.as_deref().map(str::parse::<Stage>).transpose().map_err(|e| e.to_string())?;
    let stage = match (cli.command.map(Command::stage), flag) {
        (Some(a), Some(b)) if a != b => return Err(format!("subcommand `{a}` conflicts with --stage {b}")),
        (Some(s), _) | (None, Some(s)) => s,
        (None, None) => return Err("no stage given; use a subcommand or --stage".into()),
    };
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p),
        None => RunConfig::from_toml(""),
    }
    .map_err(|e| e.to_string())?;
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let dir = cfg.out.clone();
    let run = Run::new(cfg, dir).map_err(|e| e.to_string())?;
    run.stage(stage, cli.full).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

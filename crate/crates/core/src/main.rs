use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use reachmesh::cli::{Command, Run, RunConfig, StageError};
use reachmesh::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Train,
    Mesh,
    Analyze,
    Dim,
    Rollout,
    Pca,
    Sweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Mesh => Command::Mesh,
            Cmd::Analyze => Command::Analyze,
            Cmd::Dim => Command::Dim,
            Cmd::Rollout => Command::Rollout,
            Cmd::Pca => Command::Pca,
            Cmd::Sweep => Command::Sweep,
        }
    }
}

/// Reachable-set meshes and failure statistics for disturbed closed-loop systems.
#[derive(Debug, Parser)]
#[command(name = "reachmesh", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn fail(e: StageError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(StageError {
                stage: "threads",
                error: Error::Input(e.to_string()),
            });
        }
    }
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(error) => return fail(StageError { stage: "config", error }),
    };
    let run = Run::new(config, args.out, args.seed, args.force);
    match run.execute(args.command.into()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

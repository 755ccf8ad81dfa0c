use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manifold_lab_cli::config::Command;
use manifold_lab_cli::{execute, Invocation};

#[derive(Parser)]
#[command(name = "manifold-lab", version, about = "Run manifold-lab experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Config file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; otherwise the config `out`, then $MANIFOLD_LAB_OUT/<experiment>, then runs/<experiment>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Sub {
    Fixedpoint { path: Option<PathBuf> },
    Covers { path: Option<PathBuf> },
    Boundary { path: Option<PathBuf> },
    Stochastic { path: Option<PathBuf> },
    Plasticity { path: Option<PathBuf> },
    Datagen { path: Option<PathBuf> },
    Federation { path: Option<PathBuf> },
    Suite { path: Option<PathBuf> },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Sub::Fixedpoint { path } => (Command::Fixedpoint, path),
        Sub::Covers { path } => (Command::Covers, path),
        Sub::Boundary { path } => (Command::Boundary, path),
        Sub::Stochastic { path } => (Command::Stochastic, path),
        Sub::Plasticity { path } => (Command::Plasticity, path),
        Sub::Datagen { path } => (Command::Datagen, path),
        Sub::Federation { path } => (Command::Federation, path),
        Sub::Suite { path } => (Command::Suite, path),
    };
    let config = match (path, cli.config) {
        (Some(_), Some(_)) => {
            eprintln!("error: give the config either positionally or with --config, not both");
            return ExitCode::from(2);
        }
        (p, c) => p.or(c),
    };
    let code = execute(&Invocation {
        command,
        config,
        seed: cli.seed,
        out: cli.out,
        quiet: cli.quiet,
    });
    ExitCode::from(code as u8)
}

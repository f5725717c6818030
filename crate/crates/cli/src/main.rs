//! `deepmem`: batch front end for the verification harnesses, task
//! generators and trainers.

mod commands;
mod config;
mod error;
mod fetch;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Globals;
use error::{CliError, Exit};

#[derive(Parser)]
#[command(name = "deepmem", version, about = "Separation-rank verification and recurrent-network memory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for cell-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// List available checks without running.
    #[arg(long, global = true)]
    list: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run separation-rank and combinatorial checks.
    Verify,
    /// Train one architecture on one task.
    Train,
    /// Sweep hardness per architecture and report the success frontier.
    Frontier,
    /// Write a JSON-lines dataset for a synthetic task.
    Gen,
    /// Download and checksum the MNIST IDX files.
    FetchMnist,
    /// List checks, tasks and cell types.
    List,
}

fn run(cli: Cli) -> Result<Exit, CliError> {
    let g = Globals { config: cli.config, seed: cli.seed, jobs: cli.jobs, out: cli.out };
    match cli.command {
        Command::Verify if cli.list => {
            commands::list_checks();
            Ok(Exit::Pass)
        }
        Command::List => {
            commands::list_all();
            Ok(Exit::Pass)
        }
        Command::Verify => commands::verify(&g),
        Command::Train => commands::train(&g),
        Command::Frontier => commands::frontier(&g),
        Command::Gen => commands::gen(&g),
        Command::FetchMnist => {
            let dest = fetch::data_dir(g.out.as_deref());
            for line in fetch::fetch_mnist(&dest)? {
                println!("{line}");
            }
            Ok(Exit::Pass)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}

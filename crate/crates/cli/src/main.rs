//! `synchrony`: analyze graphs, synthesize protocols, run and plot simulations.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synchrony::Error;

#[derive(Parser)]
#[command(
    name = "synchrony",
    version,
    about = "Adaptive synchronization protocols for linear multi-agent networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose a graph into basic bicomponents and print the β matrix.
    Analyze {
        /// Edge-list file.
        graph: Option<PathBuf>,
        /// Take the graph from a scenario instead.
        #[arg(long, conflicts_with = "graph")]
        scenario: Option<PathBuf>,
    },
    /// Synthesize the protocol selected by a scenario.
    Design {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the design here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design, simulate and verify; writes all artifacts to a directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed of a random initial condition.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-render the SVG plots of a run directory.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AssumptionViolated(_) => 2,
        Error::Parse { .. } | Error::Json(_) => 3,
        Error::NonFiniteState { .. } => 4,
        _ => 1,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Analyze { graph, scenario } => match commands::cmd_analyze(graph.as_deref(), scenario.as_deref()) {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Design { scenario, out } => match commands::cmd_design(&scenario) {
            Ok(dump) => {
                let json = match serde_json::to_string_pretty(&dump) {
                    Ok(j) => j,
                    Err(e) => return fail(&e.into()),
                };
                match out {
                    Some(path) => {
                        if let Err(e) = std::fs::write(&path, json) {
                            return fail(&e.into());
                        }
                        println!("design written to {}", path.display());
                    }
                    None => println!("{json}"),
                }
                for w in dump.design.warnings() {
                    eprintln!("warning: {w}");
                }
                ExitCode::SUCCESS
            }
            Err((e, structure)) => {
                if let Some(s) = structure {
                    println!("{s}");
                }
                fail(&e)
            }
        },
        Command::Run { scenario, out, seed } => match commands::cmd_run(&scenario, &out, seed) {
            Ok(artifacts) => {
                print!("{}", artifacts.report.to_text());
                println!(
                    "artifacts written to {} ({} files)",
                    artifacts.dir.display(),
                    artifacts.files.len()
                );
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Plot { out } => match commands::cmd_plot(&out) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
    }
}

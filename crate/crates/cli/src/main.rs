use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod workspace;

use commands::Output;
use workspace::Workspace;

#[derive(Parser)]
#[command(name = "calico", version, about = "Check, deploy, debug and evolve component architectures")]
struct Cli {
    /// Workspace root holding scripts/, scenarios/, reconfig/ and the session report
    #[arg(long, global = true, env = "CALICO_WORKSPACE", default_value = ".")]
    workspace: PathBuf,
    /// Print machine-readable JSON instead of text
    #[arg(long, global = true)]
    json: bool,
    /// Seed for the simulated runtime (deploy only; overrides calico.json)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a model; exit 0 iff the gate passes
    Check { model: PathBuf },
    /// Write behavior-script skeletons for components without one
    Scaffold { model: PathBuf },
    /// Analyze, plan, weave and instantiate a model
    Deploy { model: PathBuf },
    /// Run a scenario against the deployed system with runtime checks
    Run { scenario: String },
    /// Print the JSONL trace of the deployed system
    Events {
        /// Only the last N entries
        #[arg(long)]
        tail: Option<usize>,
    },
    /// Print the runtime mirror: components, bindings, probes and clock
    Status,
    /// Re-analyze a new model and apply the difference to the running system
    Evolve { model: PathBuf },
}

fn dispatch(cli: &Cli) -> Result<Output> {
    let ws = Workspace::new(&cli.workspace);
    if let Command::Check { model } = &cli.command {
        return commands::check(&ws, model);
    }
    let _lock = ws.lock()?;
    match &cli.command {
        Command::Check { .. } => unreachable!(),
        Command::Scaffold { model } => commands::scaffold(&ws, model),
        Command::Deploy { model } => commands::deploy(&ws, model, cli.seed),
        Command::Run { scenario } => commands::run(&ws, scenario),
        Command::Events { tail } => commands::events(&ws, *tail),
        Command::Status => commands::status(&ws),
        Command::Evolve { model } => commands::evolve_cmd(&ws, model),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).unwrap_or_default());
            } else if !out.human.is_empty() {
                println!("{}", out.human);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            let code = commands::error_code(&e);
            if cli.json {
                println!("{}", serde_json::json!({ "error": format!("{e:#}") }));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

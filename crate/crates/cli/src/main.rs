//! `jesp` command-line driver.

mod bench;
mod commands;
mod io;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CompileBrArgs, EvalArgs, SolveArgs};

#[derive(Parser, Debug)]
#[command(name = "jesp", version, about = "Best-response search over finite-state controllers for Dec-POMDPs")]
struct Cli {
    /// Worker threads for restarts and bench rows (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the search and write the run result plus one controller file per agent.
    Solve(SolveArgs),
    /// Evaluate a joint controller exactly and optionally by simulation.
    Eval(EvalArgs),
    /// Compile one agent's best-response POMDP against fixed partner controllers.
    CompileBr(CompileBrArgs),
    /// Run the benchmark suite and compare with reference values.
    Bench(bench::BenchArgs),
}

/// Failure classes with their exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable input, parse error or invalid configuration.
    Config(String),
    /// The time budget ran out before any search iteration completed.
    Timeout(String),
    /// A best-response state space exceeded its cap.
    Capacity(String),
    /// A required benchmark threshold was missed.
    Threshold(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Timeout(_) => 3,
            Failure::Capacity(_) => 4,
            Failure::Threshold(_) | Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Timeout(m) | Failure::Capacity(m) | Failure::Threshold(m) | Failure::Other(m) => m,
        }
    }
}

impl From<jesp_core::Error> for Failure {
    fn from(e: jesp_core::Error) -> Self {
        use jesp_core::Error as E;
        match e {
            E::CapacityExceeded { .. } => Failure::Capacity(e.to_string()),
            E::NonConvergence { .. } | E::ZeroProbabilityObservation { .. } => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Solve(a) => commands::solve(a, cli.jobs),
        Command::Eval(a) => commands::eval(a),
        Command::CompileBr(a) => commands::compile_br(a),
        Command::Bench(a) => bench::run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

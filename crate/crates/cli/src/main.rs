mod io;
mod simulate;
mod solve;
mod track;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Sparse unit-sum regression under cardinality and negative-mass budgets.
#[derive(Debug, Parser)]
#[command(name = "sparsum", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one problem instance and print the solution as JSON.
    Solve(solve::SolveArgs),
    /// Run the simulation study and write the aggregated measures as CSV.
    Simulate(simulate::SimulateArgs),
    /// Build index-tracking portfolios for a list of cardinalities.
    Track(track::TrackArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    User,
    Internal,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::User, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Internal, message: message.into() }
    }
}

impl From<sparsum::Error> for CliError {
    fn from(e: sparsum::Error) -> Self {
        CliError::user(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::internal(format!("serialization failed: {e}"))
    }
}

/// Runs `f` on a pool of `jobs` threads.
pub fn with_jobs<T>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    if jobs == 0 {
        return Err(CliError::user("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => solve::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Track(args) => track::run(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(match e.kind {
                ErrorKind::User => 2,
                ErrorKind::Internal => 3,
            })
        }
        Err(_) => ExitCode::from(3),
    }
}

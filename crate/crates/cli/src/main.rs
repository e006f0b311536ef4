//! `powersim`: fluid analyses, packet-level scenarios and the acceptance checks.

mod check;
mod config;
mod fluid;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use powersim::scenarios::output::OUT_ENV;

#[derive(Parser)]
#[command(name = "powersim", version, about)]
struct Cli {
    /// Output root; each run writes to a subdirectory named by its config hash.
    #[arg(long, global = true, env = OUT_ENV, default_value = powersim::scenarios::output::DEFAULT_OUT)]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the fluid model and report equilibrium, eigenvalues and convergence.
    Fluid(fluid::FluidArgs),
    /// Run a packet-level scenario.
    Sim(sim::SimArgs),
    /// Run the acceptance checks and print a pass/fail table.
    Check(check::CheckArgs),
}

/// Options shared by the commands that read a config file.
#[derive(Args, Debug, Clone)]
pub struct ConfigArg {
    /// JSON config; its keys take precedence over flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum Failure {
    /// At least one acceptance criterion failed.
    Acceptance(String),
    /// Bad flags or config.
    Usage(String),
    /// The run finished but tripped an assertion, or the simulator failed.
    Scenario(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Acceptance(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Scenario(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Acceptance(m) | Failure::Usage(m) | Failure::Scenario(m) => m,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Scenario(format!("writing output: {e}"))
    }
}

/// Writes a line to stdout. A closed pipe (`| head`) is not an error.
pub fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Fluid(a) => fluid::run(a, &cli.out),
        Command::Sim(a) => sim::run(a, &cli.out),
        Command::Check(a) => check::run(a, &cli.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

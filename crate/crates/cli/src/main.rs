//! `fedrelax` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data or validation
//! error, 3 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fedrelax::engine::Schedule;
use fedrelax::Error;

use config::Overrides;

#[derive(Parser)]
#[command(name = "fedrelax", version, about = "Federated learning by GTV minimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic networked dataset.
    Synth(CommonArgs),
    /// Run FedRelax and write round logs and final models.
    Run(CommonArgs),
    /// Solve the linear least-squares instance exactly.
    Oracle(CommonArgs),
    /// Summarize a run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<ScheduleArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory; defaults to --out.
    dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Parallel,
    Sequential,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            lambda: self.lambda,
            schedule: self.schedule.map(|s| match s {
                ScheduleArg::Parallel => Schedule::Parallel,
                ScheduleArg::Sequential => Schedule::Sequential,
            }),
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                Error::Parameter(_) | Error::UnsupportedSpec(_) | Error::SizeCap { .. } => 1,
                Error::DegenerateFit
                | Error::NonFinite { .. }
                | Error::Numerical(_)
                | Error::Protocol(_) => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a.config, &a.overrides()),
        Command::Run(a) => commands::run(&a.config, &a.overrides()),
        Command::Oracle(a) => commands::oracle(&a.config, &a.overrides()),
        Command::Report(a) => match a.dir.or(a.out) {
            Some(dir) => commands::report(&dir),
            None => Err(CliError::Usage("report needs a run directory".into())),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fedrelax: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

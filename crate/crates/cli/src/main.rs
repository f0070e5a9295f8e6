use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;
mod report;

/// Failures mapped onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("no such file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] blowuplab_core::Error),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingFile(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "blowuplab", version, about = "Blow-up experiments for critical semilinear wave equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON); every key has a default.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides $BLOWUPLAB_OUT and the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the eigenfunction table on a lambda ladder.
    Eigen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025, 0.0125])]
        lambdas: Vec<f64>,
        /// Radial spacing of the table.
        #[arg(long, default_value_t = 0.01)]
        dr: f64,
    },
    /// Evaluate xi_q and eta_q at points; CSV on stdout.
    Testfn {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0])]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 10.0, 100.0])]
        t: Vec<f64>,
        /// Values of s; each is paired with every t >= s. Defaults to s = t.
        #[arg(long, value_delimiter = ',')]
        s: Vec<f64>,
    },
    /// Integrate one run and persist it under runs/<hash>/.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override the data amplitude.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Run verification checks and emit a JSON report.
    Verify {
        #[arg(value_enum)]
        target: Target,
        #[command(flatten)]
        common: Common,
        /// Run directory or its record.json.
        #[arg(long)]
        run: Option<PathBuf>,
        #[command(flatten)]
        constants: ConstantFlags,
    },
    /// Tabulate the lifespan bound over an amplitude sweep; CSV on stdout.
    Lifespan {
        #[command(flatten)]
        common: Common,
        /// Overrides the config dimension.
        #[arg(long)]
        n: Option<usize>,
        /// start:stop:count, evenly spaced and inclusive.
        #[arg(long, default_value = "1.0:0.2:8")]
        eps_sweep: String,
        #[command(flatten)]
        constants: ConstantFlags,
        /// Take the constants from an iteration report.
        #[arg(long, conflicts_with = "c_frame")]
        report: Option<PathBuf>,
        /// Also simulate every amplitude and record the measured lifespan.
        #[arg(long)]
        measure: bool,
    },
    /// Simulate several amplitudes in parallel and summarize.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ConstantFlags {
    #[arg(long, requires_all = ["c0", "b1"])]
    pub c_frame: Option<f64>,
    #[arg(long, requires_all = ["c_frame", "b1"])]
    pub c0: Option<f64>,
    #[arg(long, requires_all = ["c_frame", "c0"])]
    pub b1: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Testfn,
    Functional,
    Iteration,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Eigen { common, lambdas, dr } => commands::eigen(&common, &lambdas, dr),
        Command::Testfn { common, x, t, s } => commands::testfn(&common, &x, &t, &s),
        Command::Simulate { common, eps } => commands::simulate(&common, eps),
        Command::Verify {
            target,
            common,
            run,
            constants,
        } => commands::verify(&common, target, run.as_deref(), constants),
        Command::Lifespan {
            common,
            n,
            eps_sweep,
            constants,
            report,
            measure,
        } => commands::lifespan(&common, n, &eps_sweep, constants, report.as_deref(), measure),
        Command::Sweep { common, eps } => commands::sweep(&common, &eps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("blowuplab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

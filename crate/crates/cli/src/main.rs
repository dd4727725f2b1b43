//! `opf`: command-line front end for case generation, screening, feasible-space
//! maps, local and relaxed OPF solves, and case modification.

/// `println!` that ends the process quietly once stdout is closed (`opf ... | head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout().lock(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unreadable input; exit status 2.
    #[error("{0}")]
    Usage(String),
    /// A solver ran and did not produce an answer; exit status 1.
    #[error("{0}")]
    Solver(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(_) => 1,
            CliError::Usage(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "opf", version, about = "AC optimal power flow toolkit")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for output artifacts.
    #[arg(long, global = true, env = "OPF_OUT_DIR", default_value = "opf-out")]
    pub out: PathBuf,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random small cases.
    Generate(GenerateArgs),
    /// Generate random cases and screen them for large optimality gaps.
    Screen(ScreenArgs),
    /// Map the feasible space of a small case on a setpoint grid.
    Fspace(FspaceArgs),
    /// Solve the OPF locally from a flat start.
    SolveLocal(CaseArg),
    /// Search for distinct local optima from random starts.
    Multistart(MultistartArgs),
    /// Solve the semidefinite relaxation for a lower bound.
    SolveSdp(SdpArgs),
    /// Optimality gap from given values, or a gap table for cases.
    Gap(GapArgs),
    /// Reduce loads and tighten voltage and reactive limits of a case.
    Modify(ModifyArgs),
    /// Enumerate every power flow solution at given setpoints.
    PfEnumerate(PfArgs),
}

#[derive(Debug, Args)]
pub struct CaseArg {
    /// Case file (.m or .json), a bundled case (ieee14, ieee24, ieee57,
    /// ieee118) or a tightened one (nmwc14, ...).
    #[arg(long)]
    pub case: String,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Parameter family: 3-acyclic, 3-cyclic, 4 or 5.
    #[arg(long, default_value = "3-acyclic")]
    pub family: String,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScreenArgs {
    #[arg(long, default_value = "3-acyclic")]
    pub family: String,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Gap in percent at or above which a case is selected.
    #[arg(long, default_value_t = 1.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    /// Starts for re-solving selected cases.
    #[arg(long, default_value_t = 200)]
    pub escalate: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FspaceArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Projection axes, e.g. pg2,qg2.
    #[arg(long)]
    pub axes: String,
    /// Points per grid axis.
    #[arg(long, default_value_t = opf_core::fspace::DEFAULT_POINTS)]
    pub grid: usize,
    /// Connectivity radius in projection units (default: twice the largest
    /// nearest-neighbour distance).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Also run this many multistart starts and write the optima as markers.
    #[arg(long, default_value_t = 0)]
    pub optima: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MultistartArgs {
    #[command(flatten)]
    pub case: CaseArg,
    #[arg(long, default_value_t = 200)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SdpArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Also write the problem in SDPA sparse format.
    #[arg(long)]
    pub sdpa: bool,
}

#[derive(Debug, Args)]
pub struct GapArgs {
    /// Local objective in $/hr.
    #[arg(long, requires = "bound", conflicts_with = "case")]
    pub local: Option<f64>,
    /// Lower bound in $/hr.
    #[arg(long, requires = "local")]
    pub bound: Option<f64>,
    /// Cases for a gap table; repeatable.
    #[arg(long)]
    pub case: Vec<String>,
    #[arg(long, default_value_t = 200)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModifyArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Active load reduction, percent.
    #[arg(long = "dPd", default_value_t = 0.0)]
    pub d_pd: f64,
    /// Reactive load reduction, percent.
    #[arg(long = "dQd", default_value_t = 0.0)]
    pub d_qd: f64,
    /// Upper voltage limit reduction, percent.
    #[arg(long = "dVu", default_value_t = 0.0)]
    pub d_vu: f64,
    /// Lower voltage limit increase, percent.
    #[arg(long = "dVl", default_value_t = 0.0)]
    pub d_vl: f64,
    /// Shrink of reactive lower limits toward zero, percent.
    #[arg(long = "dQg", default_value_t = 0.0)]
    pub d_qg: f64,
    /// Output file; `.m` writes an m-file, anything else JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PfArgs {
    #[command(flatten)]
    pub case: CaseArg,
    /// Voltage setpoints as bus=value pairs, e.g. 1=1.02,2=1.0 (default 1.0).
    #[arg(long, value_delimiter = ',')]
    pub vm: Vec<String>,
    /// Active generation in MW as bus=value pairs (default: middle of limits).
    #[arg(long, value_delimiter = ',')]
    pub pg: Vec<String>,
    /// Seed of the random homotopy constants.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

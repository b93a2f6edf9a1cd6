mod commands;
mod load;

use std::path::PathBuf;
use std::process::ExitCode;

use bcp_core::verify::{Mode, DEFAULT_NODE_BUDGET};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Exit status for a completed command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    CheckFailed,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Budget(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Budget(_) => 3,
        }
    }
}

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "bcp", version, about = "Broadcast consensus protocol workbench")]
pub struct Cli {
    /// Worker threads for per-input parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Cap on explored configurations per input.
    #[arg(long, global = true, default_value_t = DEFAULT_NODE_BUDGET)]
    pub budget: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse a protocol or counter machine and report structural violations.
    Validate { file: String },
    /// Run seeded random executions.
    Simulate(SimulateArgs),
    /// Exhaustively check a protocol against a predicate.
    Verify(VerifyArgs),
    /// Counter-machine tools.
    #[command(subcommand)]
    Cm(CmCommand),
    /// Rewrite a counter machine into a weaker bound class.
    #[command(subcommand)]
    Bound(BoundCommand),
    /// Compile counter machines into a broadcast protocol.
    Compile(CompileArgs),
    /// Transform a protocol into a restricted class.
    Transform(TransformArgs),
    /// Check that every broadcast returns to the initial configuration.
    CheckReset(CheckResetArgs),
}

/// Where expected values come from.
#[derive(Args, Debug, Clone)]
#[group(required = false, multiple = false)]
pub struct OracleArgs {
    /// Builtin predicate: power2, majority, geq, lt, even, odd, div3,
    /// double-geq or threshold:k.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Counter machine whose acceptance defines the predicate.
    #[arg(long)]
    pub oracle: Option<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    pub file: String,
    /// One input vector, e.g. `4` or `2,3`.
    #[arg(long, conflicts_with = "inputs")]
    pub input: Option<String>,
    /// Input range: `2..9`, `(0,0)..(3,3)` or `sum<=4`.
    #[arg(long)]
    pub inputs: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to run, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long, default_value_t = bcp_core::sim::DEFAULT_MAX_STEPS)]
    pub max_steps: u64,
    /// Quiescence window (default: 10 * |Q| * |C0|).
    #[arg(long)]
    pub window: Option<u64>,
    /// Write the step-by-step trace of a single run to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Computes,
    Silent,
    Semi,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Computes => Mode::Computes,
            ModeArg::Silent => Mode::Silent,
            ModeArg::Semi => Mode::Semi,
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub file: String,
    #[arg(long, value_enum, default_value = "computes")]
    pub mode: ModeArg,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub inputs: String,
    /// Write report lines here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum CmCommand {
    /// Accept / reject / neither, per input.
    Run(CmRunArgs),
    /// Compare the machine against a predicate.
    Check(CmCheckArgs),
    /// Check a counter bound on every reachable configuration.
    Bound(CmBoundArgs),
}

#[derive(Args, Debug)]
pub struct CmRunArgs {
    pub file: String,
    #[arg(long)]
    pub inputs: String,
}

#[derive(Args, Debug)]
pub struct CmCheckArgs {
    pub file: String,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub inputs: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CmBoundArgs {
    pub file: String,
    #[arg(long)]
    pub inputs: String,
    /// Bound to check (`n`, `weak-n`, `poly c`); defaults to the declared one.
    #[arg(long)]
    pub class: Option<String>,
    /// Additive slack; defaults to the declared one.
    #[arg(long)]
    pub slack: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum BoundCommand {
    /// Polynomially bounded to weakly n-bounded.
    Weaken(BoundArgs),
    /// Weakly n-bounded to n-bounded.
    Tighten(BoundArgs),
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    pub file: String,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Largest counter count `tighten` accepts.
    #[arg(long, default_value_t = bcp_core::bounding::DEFAULT_MAX_TIGHTEN_COUNTERS)]
    pub max_counters: usize,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    /// Machine accepting the predicate.
    pub pos: String,
    /// Machine accepting its complement; without it the output only
    /// semi-computes the predicate.
    #[arg(long)]
    pub neg: Option<String>,
    /// Compile the machines as they are, without bounding passes.
    #[arg(long, conflicts_with = "always_bound")]
    pub skip_bounding: bool,
    /// Run the bounding passes even on n-bounded machines.
    #[arg(long)]
    pub always_bound: bool,
    /// Keep accepting leaders broadcasting forever.
    #[arg(long)]
    pub literal_accept_loop: bool,
    #[arg(long, default_value_t = bcp_core::bounding::DEFAULT_MAX_TIGHTEN_COUNTERS)]
    pub max_counters: usize,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Verify the output right away (needs an oracle and `--inputs`).
    #[arg(long, requires = "inputs")]
    pub verify: bool,
    #[command(flatten)]
    pub oracle: OracleArgs,
    #[arg(long)]
    pub inputs: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["leaderless", "single_broadcaster", "single_signal"])))]
pub struct TransformArgs {
    pub file: String,
    #[arg(long)]
    pub leaderless: bool,
    #[arg(long)]
    pub single_broadcaster: bool,
    #[arg(long)]
    pub single_signal: bool,
    /// Input symbol that supplies the leaders (`--leaderless`).
    #[arg(long)]
    pub symbol: Option<String>,
    /// Inputs on which to check that the source is quietly silent
    /// (`--single-signal`).
    #[arg(long)]
    pub inputs: Option<String>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CheckResetArgs {
    pub file: String,
    #[arg(long)]
    pub inputs: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::CheckFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

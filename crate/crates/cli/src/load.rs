//! Reading protocols, machines, inputs and oracles from the command line.

use std::fs;
use std::path::{Path, PathBuf};

use bcp_core::cm::{cm_outcome, parse_machine, CmError, CmOutcome, CounterMachine, ExploreLimits};
use bcp_core::corpus;
use bcp_core::format::parse_protocol;
use bcp_core::oracle::{inputs_with_sum_at_most, parse_inputs, Builtin};
use bcp_core::protocol::{BroadcastProtocol, InputVector};

use crate::{usage, CliError, OracleArgs};

/// Reads a file, falling back to a bundled corpus entry of that name.
pub fn read_source(arg: &str) -> Result<String, CliError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Ok(e) = corpus::entry(arg) {
            return Ok(e.source.to_string());
        }
    }
    fs::read_to_string(path).map_err(|source| CliError::Io { path: arg.to_string(), source })
}

pub enum Artifact {
    Protocol(BroadcastProtocol),
    Machine(CounterMachine),
}

pub fn load_any(arg: &str) -> Result<Artifact, CliError> {
    let src = read_source(arg)?;
    let is_machine = src
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.split_whitespace().next() == Some("cm"));
    if is_machine {
        parse_machine(&src).map(Artifact::Machine).map_err(|e| usage(format!("{arg}: {e}")))
    } else {
        parse_protocol(&src).map(Artifact::Protocol).map_err(|e| usage(format!("{arg}: {e}")))
    }
}

pub fn load_protocol(arg: &str) -> Result<BroadcastProtocol, CliError> {
    match load_any(arg)? {
        Artifact::Protocol(p) => Ok(p),
        Artifact::Machine(_) => Err(usage(format!("{arg}: expected a protocol, found a counter machine"))),
    }
}

pub fn load_machine(arg: &str) -> Result<CounterMachine, CliError> {
    match load_any(arg)? {
        Artifact::Machine(m) => Ok(m),
        Artifact::Protocol(_) => Err(usage(format!("{arg}: expected a counter machine, found a protocol"))),
    }
}

/// Parses an input range for `arity` symbols. Besides the core range
/// syntax, `sum<=k` lists every vector with components summing to at most k.
pub fn inputs(range: &str, arity: usize) -> Result<Vec<InputVector>, CliError> {
    let compact: String = range.chars().filter(|c| !c.is_whitespace()).collect();
    let list = match compact.strip_prefix("sum<=") {
        Some(k) => inputs_with_sum_at_most(arity, k.parse().map_err(|_| usage(format!("bad input range `{range}`")))?),
        None => parse_inputs(range).map_err(usage)?,
    };
    if let Some(bad) = list.iter().find(|i| i.0.len() != arity) {
        return Err(usage(format!("input {bad} has {} components, expected {arity}", bad.0.len())));
    }
    Ok(list)
}

/// Drops inputs whose population (plus `leaders`) is below two agents.
pub fn populated(list: Vec<InputVector>, leaders: u64) -> Vec<InputVector> {
    let (keep, skip): (Vec<_>, Vec<_>) = list.into_iter().partition(|i| i.size() + leaders >= 2);
    if !skip.is_empty() {
        let names: Vec<String> = skip.iter().map(ToString::to_string).collect();
        eprintln!("note: skipping inputs with fewer than 2 agents: {}", names.join(" "));
    }
    keep
}

pub enum Oracle {
    Builtin(Builtin),
    Machine(Box<CounterMachine>),
}

impl Oracle {
    pub fn from_args(args: &OracleArgs) -> Result<Option<Oracle>, CliError> {
        match (&args.builtin, &args.oracle) {
            (Some(b), _) => Ok(Some(Oracle::Builtin(b.parse::<Builtin>().map_err(usage)?))),
            (None, Some(file)) => Ok(Some(Oracle::Machine(Box::new(load_machine(file)?)))),
            (None, None) => Ok(None),
        }
    }

    pub fn required(args: &OracleArgs) -> Result<Oracle, CliError> {
        Self::from_args(args)?.ok_or_else(|| usage("an oracle is required (`--builtin` or `--oracle`)"))
    }

    pub fn arity(&self) -> usize {
        match self {
            Oracle::Builtin(b) => b.arity(),
            Oracle::Machine(m) => m.input_arity,
        }
    }

    /// Expected value at `input`: machine oracles must accept or reject.
    pub fn eval(&self, input: &InputVector, budget: usize) -> Result<bool, CliError> {
        match self {
            Oracle::Builtin(b) => b.eval(input).map_err(usage),
            Oracle::Machine(m) => {
                let limits = ExploreLimits { max_nodes: budget, ..Default::default() };
                match cm_outcome(m, input, &limits).map_err(machine_error)? {
                    CmOutcome::Accept => Ok(true),
                    CmOutcome::Reject => Ok(false),
                    CmOutcome::Neither => {
                        Err(usage(format!("oracle machine `{}` neither accepts nor rejects {input}", m.name)))
                    }
                }
            }
        }
    }
}

pub fn machine_error(e: CmError) -> CliError {
    match e {
        CmError::BudgetExceeded(_) | CmError::SumCapExceeded { .. } => CliError::Budget(e.to_string()),
        other => usage(other),
    }
}

/// Writes `text` to `path`, or to standard output when there is no path.
pub fn emit(text: &str, path: Option<&PathBuf>) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

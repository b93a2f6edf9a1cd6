use std::fmt::Write as _;

use bcp_core::bounding::{tighten, weaken};
use bcp_core::cm::{check_bounded, explore, serialize_machine, BoundClass, CmOutcome, CounterMachine, ExploreLimits};
use bcp_core::compile::{cm_to_protocol, pipeline, Bounding, CompileError, CompileOptions, PipelineOptions};
use bcp_core::format::serialize_protocol;
use bcp_core::protocol::{BroadcastProtocol, InputVector};
use bcp_core::sim::{simulate, SimParams, SimSummary};
use bcp_core::transforms::{
    check_quiet_silence, check_reset_protocol, to_leaderless, to_single_broadcaster, to_single_signal,
};
use bcp_core::verify::{check, render_witness, Mode, VerifyError, WitnessStep};
use rayon::prelude::*;
use serde::Serialize;

use crate::load::{self, emit, machine_error, Artifact, Oracle};
use crate::{
    usage, BoundCommand, CheckResetArgs, Cli, CliError, CmCommand, Command, CompileArgs, Status, TransformArgs,
    VerifyArgs,
};

pub fn run(cli: &Cli) -> Result<Status, CliError> {
    let budget = cli.budget;
    match &cli.command {
        Command::Validate { file } => validate(file),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Verify(a) => verify_cmd(a, budget),
        Command::Cm(c) => cm_cmd(c, budget),
        Command::Bound(c) => bound_cmd(c),
        Command::Compile(a) => compile_cmd(a, budget),
        Command::Transform(a) => transform_cmd(a, budget),
        Command::CheckReset(a) => check_reset_cmd(a, budget),
    }
}

fn verify_error(e: VerifyError) -> CliError {
    match e {
        VerifyError::BudgetExceeded(_) => CliError::Budget(e.to_string()),
        other => usage(other),
    }
}

fn compile_error(e: CompileError) -> CliError {
    match e {
        CompileError::Verify(v) => verify_error(v),
        CompileError::Machine(m) => machine_error(m),
        other => usage(other),
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    input: &'a [u32],
    error: String,
}

/// Serializes per-input results in input order. Budget overruns get an
/// error line and turn the exit status into 3 once everything is written;
/// any other error aborts.
fn report<T: Serialize>(
    inputs: &[InputVector],
    results: Vec<Result<(T, bool), CliError>>,
    path: Option<&std::path::PathBuf>,
) -> Result<Status, CliError> {
    let mut out = String::new();
    let mut failed = false;
    let mut budget = None;
    for (input, r) in inputs.iter().zip(results) {
        let line = match r {
            Ok((record, passed)) => {
                failed |= !passed;
                serde_json::to_string(&record)
            }
            Err(CliError::Budget(msg)) => {
                let line = serde_json::to_string(&ErrorRecord { input: &input.0, error: msg.clone() });
                budget.get_or_insert(msg);
                line
            }
            Err(e) => return Err(e),
        };
        writeln!(out, "{}", line.expect("records serialize")).unwrap();
    }
    emit(&out, path)?;
    match budget {
        Some(msg) => Err(CliError::Budget(msg)),
        None if failed => Ok(Status::CheckFailed),
        None => Ok(Status::Ok),
    }
}

fn validate(file: &str) -> Result<Status, CliError> {
    let problems: Vec<(String, bool)> = match load::load_any(file)? {
        Artifact::Protocol(p) => p.validate().iter().map(|v| (v.to_string(), false)).collect(),
        Artifact::Machine(m) => m.validate().iter().map(|v| (v.to_string(), v.is_warning())).collect(),
    };
    for (text, _) in &problems {
        println!("{text}");
    }
    if problems.iter().any(|(_, warning)| !warning) {
        Ok(Status::CheckFailed)
    } else {
        eprintln!("{file}: ok");
        Ok(Status::Ok)
    }
}

fn simulate_cmd(a: &crate::SimulateArgs) -> Result<Status, CliError> {
    let p = load::load_protocol(&a.file)?;
    let inputs = match (&a.input, &a.inputs) {
        (Some(i), None) => vec![bcp_core::oracle::parse_input(i).map_err(usage)?],
        (None, Some(r)) => load::inputs(r, p.alphabet.len())?,
        _ => return Err(usage("give `--input` or `--inputs`")),
    };
    if a.runs == 0 || a.max_steps == 0 || a.window == Some(0) {
        return Err(usage("`--runs`, `--max-steps` and `--window` must be positive"));
    }
    if a.trace.is_some() && (inputs.len() != 1 || a.runs != 1) {
        return Err(usage("`--trace` needs a single input and a single run"));
    }
    let params = SimParams { max_steps: a.max_steps, window: a.window, record_trace: a.trace.is_some() };
    let jobs: Vec<(InputVector, u64)> =
        inputs.iter().flat_map(|i| (0..a.runs).map(move |k| (i.clone(), a.seed + k))).collect();
    let traces: Vec<_> =
        jobs.par_iter().map(|(input, seed)| simulate(&p, input, *seed, &params).map_err(usage)).collect();
    let mut out = String::new();
    for (t, (input, seed)) in traces.into_iter().zip(&jobs) {
        let t = t?;
        if let Some(path) = &a.trace {
            emit(&t.to_text(&p), Some(path))?;
        }
        let summary = SimSummary { input: input.clone(), seed: *seed, verdict: t.verdict, steps_taken: t.steps_taken };
        writeln!(out, "{}", serde_json::to_string(&summary).expect("records serialize")).unwrap();
    }
    emit(&out, None)?;
    Ok(Status::Ok)
}

fn verify_protocol(
    p: &BroadcastProtocol,
    mode: Mode,
    oracle: &Oracle,
    range: &str,
    budget: usize,
    path: Option<&std::path::PathBuf>,
) -> Result<Status, CliError> {
    if oracle.arity() != p.alphabet.len() {
        return Err(usage(format!(
            "oracle takes {} inputs but the protocol has {} input symbols",
            oracle.arity(),
            p.alphabet.len()
        )));
    }
    let inputs = load::populated(load::inputs(range, p.alphabet.len())?, p.leaders.size());
    let results: Vec<_> = inputs
        .par_iter()
        .map(|input| {
            let expected = oracle.eval(input, budget)?;
            let e = check(p, input, mode, expected, budget).map_err(verify_error)?;
            Ok((e.record(p), e.passed()))
        })
        .collect();
    let status = report(&inputs, results, path)?;
    if status == Status::CheckFailed {
        eprintln!("some inputs failed");
    }
    Ok(status)
}

fn verify_cmd(a: &VerifyArgs, budget: usize) -> Result<Status, CliError> {
    let p = load::load_protocol(&a.file)?;
    let oracle = Oracle::required(&a.oracle)?;
    verify_protocol(&p, a.mode.into(), &oracle, &a.inputs, budget, a.report.as_ref())
}

fn outcome_name(o: CmOutcome) -> &'static str {
    match o {
        CmOutcome::Accept => "accept",
        CmOutcome::Reject => "reject",
        CmOutcome::Neither => "neither",
    }
}

#[derive(Serialize)]
struct CmRunRecord<'a> {
    input: &'a [u32],
    outcome: &'static str,
    nodes: usize,
}

#[derive(Serialize)]
struct CmCheckRecord<'a> {
    input: &'a [u32],
    expected: u8,
    outcome: &'static str,
    verdict: &'static str,
    nodes: usize,
}

#[derive(Serialize)]
struct CmBoundRecord<'a> {
    input: &'a [u32],
    bound: String,
    slack: u32,
    verdict: &'static str,
    nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    violation: Option<String>,
}

fn verdict_name(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "fail"
    }
}

fn outcome_with_size(m: &CounterMachine, input: &InputVector, budget: usize) -> Result<(CmOutcome, usize), CliError> {
    let limits = ExploreLimits { max_nodes: budget, ..Default::default() };
    let g = explore(m, input, &limits).map_err(machine_error)?;
    Ok((g.outcome(m), g.len()))
}

fn cm_cmd(c: &CmCommand, budget: usize) -> Result<Status, CliError> {
    match c {
        CmCommand::Run(a) => {
            let m = load::load_machine(&a.file)?;
            let inputs = load::inputs(&a.inputs, m.input_arity)?;
            let results: Vec<_> = inputs
                .par_iter()
                .map(|input| {
                    let (outcome, nodes) = outcome_with_size(&m, input, budget)?;
                    Ok((CmRunRecord { input: &input.0, outcome: outcome_name(outcome), nodes }, true))
                })
                .collect();
            report(&inputs, results, None)
        }
        CmCommand::Check(a) => {
            let m = load::load_machine(&a.file)?;
            let oracle = Oracle::required(&a.oracle)?;
            let inputs = load::inputs(&a.inputs, m.input_arity)?;
            let results: Vec<_> = inputs
                .par_iter()
                .map(|input| {
                    let expected = oracle.eval(input, budget)?;
                    let (outcome, nodes) = outcome_with_size(&m, input, budget)?;
                    let passed = outcome == if expected { CmOutcome::Accept } else { CmOutcome::Reject };
                    let record = CmCheckRecord {
                        input: &input.0,
                        expected: u8::from(expected),
                        outcome: outcome_name(outcome),
                        verdict: verdict_name(passed),
                        nodes,
                    };
                    Ok((record, passed))
                })
                .collect();
            report(&inputs, results, a.report.as_ref())
        }
        CmCommand::Bound(a) => {
            let m = load::load_machine(&a.file)?;
            let bound = match &a.class {
                Some(s) => s.parse::<BoundClass>().map_err(usage)?,
                None => {
                    m.bound.ok_or_else(|| usage(format!("machine `{}` declares no bound; pass `--class`", m.name)))?
                }
            };
            let slack = a.slack.unwrap_or(m.slack);
            let inputs = load::inputs(&a.inputs, m.input_arity)?;
            let results: Vec<_> = check_bounded(&m, &inputs, bound, slack, budget)
                .into_iter()
                .zip(&inputs)
                .map(|(r, input)| {
                    let e = r.map_err(machine_error)?;
                    let record = CmBoundRecord {
                        input: &input.0,
                        bound: bound.to_string(),
                        slack,
                        verdict: verdict_name(e.passed()),
                        nodes: e.nodes,
                        violation: e.violation.as_ref().map(|c| c.display(&m).to_string()),
                    };
                    Ok((record, e.passed()))
                })
                .collect();
            report(&inputs, results, None)
        }
    }
}

fn bound_cmd(c: &BoundCommand) -> Result<Status, CliError> {
    let (a, out) = match c {
        BoundCommand::Weaken(a) => {
            let m = load::load_machine(&a.file)?;
            (a, weaken(&m).map_err(usage)?.machine)
        }
        BoundCommand::Tighten(a) => {
            let m = load::load_machine(&a.file)?;
            (a, tighten(&m, a.max_counters).map_err(usage)?.machine)
        }
    };
    emit(&serialize_machine(&out), a.output.as_ref())?;
    Ok(Status::Ok)
}

fn compile_cmd(a: &CompileArgs, budget: usize) -> Result<Status, CliError> {
    let pos = load::load_machine(&a.pos)?;
    let opts = PipelineOptions {
        bounding: if a.skip_bounding {
            Bounding::Never
        } else if a.always_bound {
            Bounding::Always
        } else {
            Bounding::Auto
        },
        compile: CompileOptions { literal_accept_loop: a.literal_accept_loop },
        max_tighten_counters: Some(a.max_counters),
    };
    let (protocol, mode) = match &a.neg {
        Some(neg) => {
            let neg = load::load_machine(neg)?;
            (pipeline(&pos, &neg, &opts).map_err(compile_error)?.composed.protocol, Mode::Silent)
        }
        None => {
            let low = bcp_core::compile::lower(&pos, &opts).map_err(compile_error)?;
            (cm_to_protocol(&low, &opts.compile).map_err(compile_error)?.protocol, Mode::Semi)
        }
    };
    let text = serialize_protocol(&protocol);
    match &a.output {
        Some(path) => emit(&text, Some(path))?,
        None if !a.verify => emit(&text, None)?,
        None => {}
    }
    eprintln!(
        "{}: {} states, {} rendez-vous, {} broadcasts",
        protocol.name,
        protocol.num_states(),
        protocol.rendezvous.len(),
        protocol.broadcasts.len()
    );
    if !a.verify {
        return Ok(Status::Ok);
    }
    // The source machine is the default oracle.
    let oracle = Oracle::from_args(&a.oracle)?.unwrap_or_else(|| Oracle::Machine(Box::new(pos.clone())));
    let range = a.inputs.as_deref().expect("clap requires --inputs with --verify");
    verify_protocol(&protocol, mode, &oracle, range, budget, a.report.as_ref())
}

fn transform_cmd(a: &TransformArgs, budget: usize) -> Result<Status, CliError> {
    let p = load::load_protocol(&a.file)?;
    let (protocol, convention) = if a.leaderless {
        let t = to_leaderless(&p, a.symbol.as_deref()).map_err(usage)?;
        let convention = t.convention();
        (t.protocol, convention)
    } else if a.single_broadcaster {
        let t = to_single_broadcaster(&p).map_err(usage)?;
        (t.protocol, "inputs unchanged; one extra leader agent".to_string())
    } else {
        if let Some(range) = &a.inputs {
            let inputs = load::populated(load::inputs(range, p.alphabet.len())?, p.leaders.size());
            for input in &inputs {
                if let Some(w) = check_quiet_silence(&p, input, budget).map_err(verify_error)? {
                    eprintln!(
                        "warning: NotSilent: at input {input} the source reaches {} where it is not quietly silent; \
                         the output need not compute the same predicate",
                        w.last().display(&p)
                    );
                }
            }
        }
        let t = to_single_signal(&p).map_err(usage)?;
        (t.protocol, "inputs unchanged".to_string())
    };
    let text = format!("# input convention: {convention}\n{}", serialize_protocol(&protocol));
    emit(&text, a.output.as_ref())?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ResetRecord<'a> {
    input: &'a [u32],
    verdict: &'static str,
    nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    transition: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<WitnessStep>>,
}

fn check_reset_cmd(a: &CheckResetArgs, budget: usize) -> Result<Status, CliError> {
    let p = load::load_protocol(&a.file)?;
    let inputs = load::populated(load::inputs(&a.inputs, p.alphabet.len())?, p.leaders.size());
    let results: Vec<_> = check_reset_protocol(&p, &inputs, budget)
        .into_iter()
        .zip(&inputs)
        .map(|(r, input)| {
            let e = r.map_err(verify_error)?;
            let v = e.violation.as_ref();
            let record = ResetRecord {
                input: &input.0,
                verdict: verdict_name(e.passed()),
                nodes: e.nodes,
                transition: v.map(|v| v.transition.to_string()),
                target: v.map(|v| v.target.display(&p).to_string()),
                witness: v.map(|v| render_witness(&p, &v.path)),
            };
            Ok((record, e.passed()))
        })
        .collect();
    report(&inputs, results, a.report.as_ref())
}

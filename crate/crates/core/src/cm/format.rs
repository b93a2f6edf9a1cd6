//! Text format for counter machines.
//!
//! ```text
//! cm <name>
//! counters: x1 x2 z
//! input-arity: 2
//! states: q0 qa qr q1
//! init: q0 accept: qa reject: qr
//! bound: poly 2
//! slack: 1
//! trans: q0 nonzero(x1) q1
//! trans: q1 [dec(x1); inc(z)] q0
//! ```
//!
//! A bracketed instruction list is expanded into fresh states
//! `<src>#m<j>#<k>` (the `j`-th macro leaving `src`), with reverse edges on
//! all but the last step. Serialization writes the expanded machine.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::format::FormatError;
use crate::syntax::{self, Token};

use super::{BoundClass, CounterMachine, Instruction, MachineBuilder};

fn err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, message: message.into() }
}

fn parse_instruction(line: usize, text: &str, counters: &HashMap<String, usize>) -> Result<Instruction, FormatError> {
    let text = text.trim();
    if text == "nop" {
        return Ok(Instruction::Nop);
    }
    let (op, rest) = text.split_once('(').ok_or_else(|| err(line, format!("bad instruction `{text}`")))?;
    let arg = rest.strip_suffix(')').ok_or_else(|| err(line, format!("bad instruction `{text}`")))?.trim();
    let x = *counters.get(arg).ok_or_else(|| err(line, format!("unknown counter `{arg}`")))?;
    match op.trim() {
        "inc" => Ok(Instruction::Inc(x)),
        "dec" => Ok(Instruction::Dec(x)),
        "zero" => Ok(Instruction::Zero(x)),
        "nonzero" => Ok(Instruction::Nonzero(x)),
        other => Err(err(line, format!("unknown instruction `{other}`"))),
    }
}

pub fn parse_machine(source: &str) -> Result<CounterMachine, FormatError> {
    let mut name = None;
    let mut counters: Vec<String> = Vec::new();
    let mut states: Vec<String> = Vec::new();
    let mut arity = None;
    let mut roles: HashMap<String, (usize, String)> = HashMap::new();
    let mut bound = None;
    let mut slack = 0u32;
    let mut trans_lines = Vec::new();

    for line in syntax::lines(source) {
        let n = line.number;
        let toks = syntax::tokenize(line.text).map_err(|m| err(n, m))?;
        let words = syntax::words(&toks).map_err(|m| err(n, m))?;
        let Some(first) = words.first() else { continue };
        if first == "cm" {
            match words.as_slice() {
                [_, nm] if name.is_none() => name = Some(nm.clone()),
                _ => return Err(err(n, "expected `cm <name>`")),
            }
            continue;
        }
        let key = first.strip_suffix(':').ok_or_else(|| err(n, format!("unrecognized line `{}`", line.text)))?;
        let body = &words[1..];
        match key {
            "counters" => counters.extend(body.iter().cloned()),
            "states" => states.extend(body.iter().cloned()),
            "input-arity" => match body {
                [m] => arity = Some(m.parse::<usize>().map_err(|_| err(n, "bad input arity"))?),
                _ => return Err(err(n, "expected `input-arity: <m>`")),
            },
            "init" | "accept" | "reject" => {
                // Several `key: value` pairs may share a line.
                let mut rest = words.as_slice();
                while let [k, v, tail @ ..] = rest {
                    let k = k.strip_suffix(':').ok_or_else(|| err(n, format!("expected a key, found `{k}`")))?;
                    if !matches!(k, "init" | "accept" | "reject") {
                        return Err(err(n, format!("unexpected key `{k}`")));
                    }
                    roles.insert(k.to_string(), (n, v.clone()));
                    rest = tail;
                }
                if !rest.is_empty() {
                    return Err(err(n, "dangling key"));
                }
            }
            "bound" => bound = Some(body.join(" ").parse::<BoundClass>().map_err(|m| err(n, m))?),
            "slack" => match body {
                [k] => slack = k.parse::<u32>().map_err(|_| err(n, "bad slack"))?,
                _ => return Err(err(n, "expected `slack: <k>`")),
            },
            "trans" => match toks.as_slice() {
                [_, Token::Word(from), Token::Word(ins), Token::Word(to)] => {
                    trans_lines.push((n, from.clone(), ins.clone(), to.clone()))
                }
                _ => return Err(err(n, "expected `trans: <state> <instruction> <state>`")),
            },
            other => return Err(err(n, format!("unknown key `{other}`"))),
        }
    }

    let name = name.ok_or(FormatError::MissingHeader)?;
    let mut b = MachineBuilder::new(name);
    let mut counter_ids = HashMap::new();
    for c in &counters {
        if counter_ids.insert(c.clone(), b.counter(c.clone())).is_some() {
            return Err(err(0, format!("counter `{c}` declared twice")));
        }
    }
    for s in &states {
        if !syntax::is_valid_name(s) {
            return Err(FormatError::InvalidName(s.clone()));
        }
        if b.has_state(s) {
            return Err(FormatError::DuplicateState { line: 0, name: s.clone() });
        }
        b.state(s.clone());
    }
    let resolve = |b: &MachineBuilder, line: usize, s: &str| -> Result<usize, FormatError> {
        b.lookup_state(s).ok_or_else(|| FormatError::UnknownState { line, name: s.to_string() })
    };
    let mut macro_count: HashMap<usize, usize> = HashMap::new();
    for (n, from, ins, to) in trans_lines {
        let from_id = resolve(&b, n, &from)?;
        let to_id = resolve(&b, n, &to)?;
        if let Some(inner) = ins.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let seq = inner
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|s| parse_instruction(n, s, &counter_ids))
                .collect::<Result<Vec<_>, _>>()?;
            if seq.is_empty() {
                return Err(err(n, "empty instruction list"));
            }
            let j = macro_count.entry(from_id).or_insert(0);
            let prefix = format!("{from}#m{j}");
            *j += 1;
            b.sequence(from_id, &seq, to_id, &prefix);
        } else {
            b.trans(from_id, parse_instruction(n, &ins, &counter_ids)?, to_id);
        }
    }
    let role = |key: &str| -> Result<usize, FormatError> {
        let (line, s) = roles.get(key).ok_or_else(|| err(0, format!("missing `{key}:`")))?;
        resolve(&b, *line, s)
    };
    let (init, accept, reject) = (role("init")?, role("accept")?, role("reject")?);
    let m = arity.ok_or_else(|| err(0, "missing `input-arity:`"))?;
    b.set_input_arity(m);
    Ok(b.build(init, accept, reject, bound, slack))
}

fn instruction_text(m: &CounterMachine, ins: Instruction) -> String {
    match ins {
        Instruction::Inc(x) => format!("inc({})", m.counters[x]),
        Instruction::Dec(x) => format!("dec({})", m.counters[x]),
        Instruction::Zero(x) => format!("zero({})", m.counters[x]),
        Instruction::Nonzero(x) => format!("nonzero({})", m.counters[x]),
        Instruction::Nop => "nop".to_string(),
    }
}

pub fn serialize_machine(m: &CounterMachine) -> String {
    let mut out = String::new();
    writeln!(out, "cm {}", m.name).unwrap();
    writeln!(out, "counters: {}", m.counters.join(" ")).unwrap();
    writeln!(out, "input-arity: {}", m.input_arity).unwrap();
    writeln!(out, "states: {}", m.states.join(" ")).unwrap();
    writeln!(out, "init: {} accept: {} reject: {}", m.states[m.init], m.states[m.accept], m.states[m.reject]).unwrap();
    if let Some(b) = m.bound {
        writeln!(out, "bound: {b}").unwrap();
    }
    if m.slack > 0 {
        writeln!(out, "slack: {}", m.slack).unwrap();
    }
    for t in &m.transitions {
        writeln!(out, "trans: {} {} {}", m.states[t.from], instruction_text(m, t.ins), m.states[t.to]).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "\
cm demo
counters: x1 x2 z
input-arity: 2
states: q0 q1 qa qr
init: q0    accept: qa
reject: qr
bound: poly 2
slack: 1
trans: q0 nonzero(x1) q1
trans: q1 [dec(x1); inc(z)] q0   # macro
trans: q0 zero(x1) qa
";

    #[test]
    fn parses_macros_and_round_trips() {
        let m = parse_machine(SRC).unwrap();
        assert_eq!(m.states, ["q0", "q1", "qa", "qr", "q1#m0#1"]);
        assert_eq!(m.transitions.len(), 5);
        assert_eq!(m.bound, Some(BoundClass::Poly(2)));
        assert_eq!(m.slack, 1);
        assert!(m.validate().is_empty());
        let text = serialize_machine(&m);
        assert_eq!(parse_machine(&text).unwrap(), m);
        assert_eq!(serialize_machine(&parse_machine(&text).unwrap()), text);
    }

    #[test]
    fn rejects_unknown_names() {
        let bad = SRC.replace("zero(x1) qa", "zero(y) qa");
        assert!(parse_machine(&bad).is_err());
        let bad = SRC.replace("zero(x1) qa", "zero(x1) nowhere");
        assert!(matches!(parse_machine(&bad), Err(FormatError::UnknownState { .. })));
    }
}

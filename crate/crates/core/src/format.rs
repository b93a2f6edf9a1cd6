//! Text format for protocols and configurations.
//!
//! ```text
//! protocol <name>
//! states: q1 q2 ...
//! alphabet: A1 A2 ...
//! input: A1 -> q1 ; A2 -> q2
//! leaders: q3:1 q4:2
//! output1: q5 q6
//! rv: p q -> p' q'
//! bc: q -> r ; p1 -> p1', p2 -> p2'
//! ```
//!
//! `states:` and `alphabet:` may be split over several lines. Transfer
//! entries that are omitted map a state to itself.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::protocol::{identity_transfer, Broadcast, BroadcastProtocol, Configuration, RendezVous, StateId};
use crate::syntax::{self, split_on, Token};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: state `{name}` declared twice")]
    DuplicateState { line: usize, name: String },
    #[error("line {line}: unknown state `{name}`")]
    UnknownState { line: usize, name: String },
    #[error("line {line}: unknown input symbol `{name}`")]
    UnknownSymbol { line: usize, name: String },
    #[error("line {line}: transfer of `{name}` given twice")]
    DuplicateTransfer { line: usize, name: String },
    #[error("missing `protocol <name>` header")]
    MissingHeader,
    #[error("input symbol `{0}` has no initial state")]
    MissingInput(String),
    #[error("invalid name `{0}`")]
    InvalidName(String),
}

fn syntax_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, message: message.into() }
}

struct StateTable {
    index: HashMap<String, StateId>,
}

impl StateTable {
    fn resolve(&self, line: usize, name: &str) -> Result<StateId, FormatError> {
        self.index.get(name).copied().ok_or_else(|| FormatError::UnknownState { line, name: name.to_string() })
    }
}

/// Parses `a -> b` into the two names.
fn arrow_pair(line: usize, tokens: &[Token]) -> Result<(&str, &str), FormatError> {
    match tokens {
        [Token::Word(a), Token::Arrow, Token::Word(b)] => Ok((a, b)),
        _ => Err(syntax_err(line, "expected `name -> name`")),
    }
}

fn tokens(line: usize, text: &str) -> Result<Vec<Token>, FormatError> {
    syntax::tokenize(text).map_err(|m| syntax_err(line, m))
}

/// Parses `q:n` with the count after the last colon.
pub(crate) fn parse_count(line: usize, item: &str) -> Result<(&str, u32), FormatError> {
    let (name, count) =
        item.rsplit_once(':').ok_or_else(|| syntax_err(line, format!("expected `state:count`, found `{item}`")))?;
    let n = count.parse::<u32>().map_err(|_| syntax_err(line, format!("bad count in `{item}`")))?;
    Ok((name, n))
}

pub fn parse_protocol(source: &str) -> Result<BroadcastProtocol, FormatError> {
    let mut name = None;
    let mut states: Vec<String> = Vec::new();
    let mut index = HashMap::new();
    let mut alphabet: Vec<String> = Vec::new();
    let mut rest = Vec::new();

    // First pass: header, states and alphabet, so that later lines may refer
    // to states regardless of ordering.
    for line in syntax::lines(source) {
        let n = line.number;
        match syntax::split_key(line.text) {
            None => {
                let mut parts = line.text.split_whitespace();
                if parts.next() == Some("protocol") && name.is_none() {
                    let pname = parts.next().ok_or_else(|| syntax_err(n, "missing protocol name"))?;
                    if parts.next().is_some() {
                        return Err(syntax_err(n, "protocol name must be a single word"));
                    }
                    name = Some(pname.to_string());
                } else {
                    return Err(syntax_err(n, format!("unrecognized line `{}`", line.text)));
                }
            }
            Some(("states", body)) => {
                for s in syntax::words(&tokens(n, body)?).map_err(|m| syntax_err(n, m))? {
                    if !syntax::is_valid_name(&s) {
                        return Err(FormatError::InvalidName(s));
                    }
                    if index.insert(s.clone(), StateId(states.len() as u32)).is_some() {
                        return Err(FormatError::DuplicateState { line: n, name: s });
                    }
                    states.push(s);
                }
            }
            Some(("alphabet", body)) => {
                for s in syntax::words(&tokens(n, body)?).map_err(|m| syntax_err(n, m))? {
                    if alphabet.contains(&s) {
                        return Err(syntax_err(n, format!("symbol `{s}` declared twice")));
                    }
                    alphabet.push(s);
                }
            }
            Some((key, body)) => rest.push((n, key.to_string(), body.to_string())),
        }
    }
    let name = name.ok_or(FormatError::MissingHeader)?;
    let table = StateTable { index };
    let num_states = states.len();

    let mut input_map: Vec<Option<StateId>> = vec![None; alphabet.len()];
    let mut leaders = Vec::new();
    let mut output = vec![false; num_states];
    let mut rendezvous = Vec::new();
    let mut broadcasts = Vec::new();

    for (n, key, body) in rest {
        let toks = tokens(n, &body)?;
        match key.as_str() {
            "input" => {
                for group in split_on(&toks, &Token::Semi) {
                    if group.is_empty() {
                        continue;
                    }
                    let (sym, q) = arrow_pair(n, &group)?;
                    let i = alphabet
                        .iter()
                        .position(|a| a == sym)
                        .ok_or_else(|| FormatError::UnknownSymbol { line: n, name: sym.to_string() })?;
                    if input_map[i].is_some() {
                        return Err(syntax_err(n, format!("symbol `{sym}` mapped twice")));
                    }
                    input_map[i] = Some(table.resolve(n, q)?);
                }
            }
            "leaders" => {
                for item in syntax::words(&toks).map_err(|m| syntax_err(n, m))? {
                    let (q, count) = parse_count(n, &item)?;
                    leaders.push((table.resolve(n, q)?, count));
                }
            }
            "output1" => {
                for q in syntax::words(&toks).map_err(|m| syntax_err(n, m))? {
                    output[table.resolve(n, &q)?.index()] = true;
                }
            }
            "rv" => match toks.as_slice() {
                [Token::Word(p), Token::Word(q), Token::Arrow, Token::Word(p2), Token::Word(q2)] => {
                    rendezvous.push(RendezVous {
                        pre: (table.resolve(n, p)?, table.resolve(n, q)?),
                        post: (table.resolve(n, p2)?, table.resolve(n, q2)?),
                    });
                }
                _ => return Err(syntax_err(n, "expected `rv: p q -> p' q'`")),
            },
            "bc" => {
                let groups = split_on(&toks, &Token::Semi);
                if groups.len() > 2 {
                    return Err(syntax_err(n, "too many `;` in broadcast"));
                }
                let (sender, post) = arrow_pair(n, &groups[0])?;
                let mut transfer = identity_transfer(num_states);
                let mut seen = vec![false; num_states];
                if let Some(entries) = groups.get(1) {
                    for entry in split_on(entries, &Token::Comma) {
                        if entry.is_empty() {
                            continue;
                        }
                        let (from, to) = arrow_pair(n, &entry)?;
                        let from_id = table.resolve(n, from)?;
                        if std::mem::replace(&mut seen[from_id.index()], true) {
                            return Err(FormatError::DuplicateTransfer { line: n, name: from.to_string() });
                        }
                        transfer[from_id.index()] = table.resolve(n, to)?;
                    }
                }
                broadcasts.push(Broadcast {
                    sender: table.resolve(n, sender)?,
                    post: table.resolve(n, post)?,
                    transfer: transfer.into(),
                });
            }
            other => return Err(syntax_err(n, format!("unknown key `{other}`"))),
        }
    }

    let input_map = input_map
        .into_iter()
        .zip(&alphabet)
        .map(|(q, sym)| q.ok_or_else(|| FormatError::MissingInput(sym.clone())))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(BroadcastProtocol {
        name,
        states,
        alphabet,
        input_map,
        leaders: Configuration::from_counts(leaders),
        output,
        rendezvous,
        broadcasts,
    })
}

/// Canonical text form. `parse_protocol(&serialize_protocol(p)) == p` for
/// every valid protocol.
pub fn serialize_protocol(p: &BroadcastProtocol) -> String {
    let mut out = String::new();
    let name = |q: StateId| p.state_name(q);
    writeln!(out, "protocol {}", p.name).unwrap();
    writeln!(out, "states: {}", p.states.join(" ")).unwrap();
    writeln!(out, "alphabet: {}", p.alphabet.join(" ")).unwrap();
    let inputs: Vec<String> =
        p.alphabet.iter().zip(&p.input_map).map(|(a, &q)| format!("{a} -> {}", name(q))).collect();
    writeln!(out, "input: {}", inputs.join(" ; ")).unwrap();
    if !p.leaders.is_empty() {
        let ls: Vec<String> = p.leaders.entries().iter().map(|&(q, n)| format!("{}:{n}", name(q))).collect();
        writeln!(out, "leaders: {}", ls.join(" ")).unwrap();
    }
    let ones: Vec<&str> = p.states.iter().zip(&p.output).filter(|(_, &o)| o).map(|(s, _)| s.as_str()).collect();
    if !ones.is_empty() {
        writeln!(out, "output1: {}", ones.join(" ")).unwrap();
    }
    for t in &p.rendezvous {
        writeln!(out, "rv: {} {} -> {} {}", name(t.pre.0), name(t.pre.1), name(t.post.0), name(t.post.1)).unwrap();
    }
    for t in &p.broadcasts {
        write!(out, "bc: {} -> {}", name(t.sender), name(t.post)).unwrap();
        let moved: Vec<String> = t
            .transfer
            .iter()
            .enumerate()
            .filter(|&(i, &to)| to.index() != i)
            .map(|(i, &to)| format!("{} -> {}", p.states[i], name(to)))
            .collect();
        if !moved.is_empty() {
            write!(out, " ; {}", moved.join(", ")).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a configuration written as `q:n` pairs separated by whitespace.
pub fn parse_configuration(p: &BroadcastProtocol, text: &str) -> Result<Configuration, FormatError> {
    let mut counts = Vec::new();
    for item in text.split_whitespace() {
        let (q, n) = parse_count(1, item)?;
        let id = p.find_state(q).ok_or_else(|| FormatError::UnknownState { line: 1, name: q.to_string() })?;
        counts.push((id, n));
    }
    Ok(Configuration::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
# a comment
protocol demo
states: a b
states: c
alphabet: x
input: x -> a
leaders: c:2
output1: b
rv: a a -> b b   # trailing comment
bc: c -> c ; a -> b
bc: b -> a
";

    #[test]
    fn parses_and_round_trips() {
        let p = parse_protocol(SMALL).unwrap();
        assert_eq!(p.states, ["a", "b", "c"]);
        assert_eq!(p.leaders.get(StateId(2)), 2);
        assert_eq!(p.broadcasts.len(), 2);
        assert_eq!(&*p.broadcasts[1].transfer, &[StateId(0), StateId(1), StateId(2)]);
        let text = serialize_protocol(&p);
        assert_eq!(parse_protocol(&text).unwrap(), p);
        assert_eq!(serialize_protocol(&parse_protocol(&text).unwrap()), text);
    }

    #[test]
    fn rejects_duplicates_and_unknowns() {
        let dup = "protocol p\nstates: a a\nalphabet: x\ninput: x -> a\n";
        assert!(matches!(parse_protocol(dup), Err(FormatError::DuplicateState { line: 2, .. })));
        let unknown = "protocol p\nstates: a\nalphabet: x\ninput: x -> a\nrv: a z -> a a\n";
        assert!(matches!(parse_protocol(unknown), Err(FormatError::UnknownState { line: 5, .. })));
        let bad_transfer = "protocol p\nstates: a\nalphabet: x\ninput: x -> a\nbc: a -> a ; q -> a\n";
        assert!(matches!(parse_protocol(bad_transfer), Err(FormatError::UnknownState { .. })));
        let twice = "protocol p\nstates: a b\nalphabet: x\ninput: x -> a\nbc: a -> a ; b -> a, b -> b\n";
        assert!(matches!(parse_protocol(twice), Err(FormatError::DuplicateTransfer { .. })));
    }

    #[test]
    fn configuration_text() {
        let p = parse_protocol(SMALL).unwrap();
        let c = parse_configuration(&p, "c:1 a:3").unwrap();
        assert_eq!(c.display(&p).to_string(), "a:3 c:1");
        assert_eq!(parse_configuration(&p, &c.display(&p).to_string()).unwrap(), c);
    }
}

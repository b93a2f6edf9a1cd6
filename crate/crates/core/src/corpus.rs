//! Bundled protocols and counter machines, loadable by name.

use thiserror::Error;

use crate::cm::{parse_machine, CounterMachine};
use crate::format::{parse_protocol, FormatError};
use crate::oracle::Builtin;
use crate::protocol::BroadcastProtocol;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no corpus entry named `{0}`")]
    UnknownName(String),
    #[error("corpus entry `{name}` does not parse: {source}")]
    Format { name: String, source: FormatError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Protocol,
    Machine,
}

pub struct Entry {
    pub name: &'static str,
    pub kind: Kind,
    pub file: &'static str,
    pub source: &'static str,
    /// Predicate the entry computes, if it computes one.
    pub builtin: Option<Builtin>,
}

macro_rules! entry {
    ($name:literal, $kind:expr, $file:literal, $builtin:expr) => {
        Entry {
            name: $name,
            kind: $kind,
            file: $file,
            source: include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/", $file)),
            builtin: $builtin,
        }
    };
}

pub static CATALOG: &[Entry] = &[
    entry!("power2", Kind::Protocol, "power2.bcp", Some(Builtin::Power2)),
    entry!("majority", Kind::Protocol, "majority.bcp", Some(Builtin::Majority)),
    entry!("reset-demo", Kind::Protocol, "reset-demo.bcp", None),
    entry!("cm-geq", Kind::Machine, "cm-geq.cm", Some(Builtin::Geq)),
    entry!("cm-lt", Kind::Machine, "cm-lt.cm", Some(Builtin::Lt)),
    entry!("cm-even", Kind::Machine, "cm-even.cm", Some(Builtin::Even)),
    entry!("cm-odd", Kind::Machine, "cm-odd.cm", Some(Builtin::Odd)),
    entry!("cm-div3", Kind::Machine, "cm-div3.cm", Some(Builtin::Div3)),
    entry!("cm-double-geq", Kind::Machine, "cm-double-geq.cm", Some(Builtin::DoubleGeq)),
];

pub enum Artifact {
    Protocol(BroadcastProtocol),
    Machine(CounterMachine),
}

pub fn entry(name: &str) -> Result<&'static Entry, CorpusError> {
    CATALOG.iter().find(|e| e.name == name).ok_or_else(|| CorpusError::UnknownName(name.to_string()))
}

pub fn load(name: &str) -> Result<Artifact, CorpusError> {
    let e = entry(name)?;
    let wrap = |source| CorpusError::Format { name: name.to_string(), source };
    match e.kind {
        Kind::Protocol => parse_protocol(e.source).map(Artifact::Protocol).map_err(wrap),
        Kind::Machine => parse_machine(e.source).map(Artifact::Machine).map_err(wrap),
    }
}

pub fn protocol(name: &str) -> Result<BroadcastProtocol, CorpusError> {
    match load(name)? {
        Artifact::Protocol(p) => Ok(p),
        Artifact::Machine(_) => Err(CorpusError::UnknownName(name.to_string())),
    }
}

pub fn machine(name: &str) -> Result<CounterMachine, CorpusError> {
    match load(name)? {
        Artifact::Machine(m) => Ok(m),
        Artifact::Protocol(_) => Err(CorpusError::UnknownName(name.to_string())),
    }
}

pub fn protocols() -> impl Iterator<Item = &'static Entry> {
    CATALOG.iter().filter(|e| e.kind == Kind::Protocol)
}

pub fn machines() -> impl Iterator<Item = &'static Entry> {
    CATALOG.iter().filter(|e| e.kind == Kind::Machine)
}

//! Counter machines: control states plus non-negative counters driven by
//! `inc`, `dec`, `zero`, `nonzero` and `nop` instructions.

mod explore;
mod format;

pub use explore::{
    check_bounded, check_computes, cm_accepts, cm_outcome, cm_rejects, explore, BoundReportEntry, CmGraph, CmOutcome,
    CmReportEntry, ExploreLimits, DEFAULT_CM_NODE_BUDGET,
};
pub use format::{parse_machine, serialize_machine};

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::protocol::InputVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instruction {
    Inc(usize),
    Dec(usize),
    Zero(usize),
    Nonzero(usize),
    Nop,
}

impl Instruction {
    pub fn counter(self) -> Option<usize> {
        match self {
            Instruction::Inc(x) | Instruction::Dec(x) | Instruction::Zero(x) | Instruction::Nonzero(x) => Some(x),
            Instruction::Nop => None,
        }
    }

    /// The instruction that undoes this one's effect on the counters.
    pub fn reverse(self) -> Instruction {
        match self {
            Instruction::Inc(x) => Instruction::Dec(x),
            Instruction::Dec(x) => Instruction::Inc(x),
            Instruction::Zero(_) | Instruction::Nonzero(_) | Instruction::Nop => Instruction::Nop,
        }
    }

    /// Applies the instruction, returning `None` when it is blocked.
    pub fn apply(self, values: &[u32]) -> Option<Vec<u32>> {
        match self {
            Instruction::Inc(x) => {
                let mut v = values.to_vec();
                v[x] = v[x].checked_add(1)?;
                Some(v)
            }
            Instruction::Dec(x) => {
                let mut v = values.to_vec();
                v[x] = v[x].checked_sub(1)?;
                Some(v)
            }
            Instruction::Zero(x) => (values[x] == 0).then(|| values.to_vec()),
            Instruction::Nonzero(x) => (values[x] > 0).then(|| values.to_vec()),
            Instruction::Nop => Some(values.to_vec()),
        }
    }
}

/// Declared bound class of a machine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundClass {
    /// Sum of counters never exceeds the input size.
    N,
    /// Each counter never exceeds the input size.
    WeakN,
    /// Sum of counters never exceeds the input size to the power `c`.
    Poly(u32),
}

impl BoundClass {
    /// Largest counter sum this class allows at input size `n`.
    pub fn sum_limit(self, n: u64, counters: usize) -> u64 {
        match self {
            BoundClass::N => n,
            BoundClass::WeakN => n.saturating_mul(counters as u64),
            BoundClass::Poly(c) => n.saturating_pow(c).max(n),
        }
    }

    /// Whether `values` respects the class at input size `n` (plus `slack`).
    pub fn admits(self, values: &[u32], n: u64, slack: u64) -> bool {
        let sum: u64 = values.iter().map(|&v| u64::from(v)).sum();
        match self {
            BoundClass::N => sum <= n + slack,
            BoundClass::WeakN => values.iter().all(|&v| u64::from(v) <= n + slack),
            BoundClass::Poly(c) => sum <= n.saturating_pow(c).saturating_add(slack),
        }
    }
}

impl fmt::Display for BoundClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundClass::N => f.write_str("n"),
            BoundClass::WeakN => f.write_str("weak-n"),
            BoundClass::Poly(c) => write!(f, "poly {c}"),
        }
    }
}

impl std::str::FromStr for BoundClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        match parts.as_slice() {
            ["n"] => Ok(BoundClass::N),
            ["weak-n"] => Ok(BoundClass::WeakN),
            ["poly", c] => match c.parse::<u32>() {
                Ok(c) if c >= 1 => Ok(BoundClass::Poly(c)),
                _ => Err(format!("bad polynomial degree `{c}`")),
            },
            _ => Err(format!("unknown bound class `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CmTransition {
    pub from: usize,
    pub ins: Instruction,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterMachine {
    pub name: String,
    pub counters: Vec<String>,
    /// The first `input_arity` counters receive the input.
    pub input_arity: usize,
    pub states: Vec<String>,
    pub init: usize,
    pub accept: usize,
    pub reject: usize,
    pub bound: Option<BoundClass>,
    /// Extra counter-sum headroom allowed on top of the declared bound.
    pub slack: u32,
    pub transitions: Vec<CmTransition>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CmConfig {
    pub state: u32,
    pub values: Vec<u32>,
}

impl CmConfig {
    pub fn size(&self) -> u64 {
        self.values.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn display<'a>(&'a self, m: &'a CounterMachine) -> impl fmt::Display + 'a {
        CmConfigDisplay { config: self, machine: m }
    }
}

struct CmConfigDisplay<'a> {
    config: &'a CmConfig,
    machine: &'a CounterMachine,
}

impl fmt::Display for CmConfigDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (", self.machine.states[self.config.state as usize])?;
        for (i, (name, v)) in self.machine.counters.iter().zip(&self.config.values).enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CmError {
    #[error("machine expects {expected} inputs, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("exploration exceeded the budget of {0} configurations")]
    BudgetExceeded(usize),
    #[error("configuration with counter sum {sum} exceeds the exploration cap {cap}")]
    SumCapExceeded { cap: u64, sum: u64 },
    #[error("machine `{0}` has no bound declaration")]
    MissingBoundDeclaration(String),
    #[error(transparent)]
    Oracle(#[from] crate::oracle::OracleError),
}

/// Structural problem found by [`CounterMachine::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CmViolation {
    InputArityTooLarge {
        arity: usize,
        counters: usize,
    },
    UnknownState(usize),
    UnknownCounter {
        transition: usize,
        counter: usize,
    },
    DuplicateName(String),
    /// Warning: the accepting or rejecting state is not halting.
    NotHalting(String),
}

impl CmViolation {
    pub fn is_warning(&self) -> bool {
        matches!(self, CmViolation::NotHalting(_))
    }
}

impl fmt::Display for CmViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmViolation::InputArityTooLarge { arity, counters } => {
                write!(f, "input arity {arity} exceeds the {counters} counters")
            }
            CmViolation::UnknownState(i) => write!(f, "unknown control state #{i}"),
            CmViolation::UnknownCounter { transition, counter } => {
                write!(f, "transition {transition} names unknown counter #{counter}")
            }
            CmViolation::DuplicateName(n) => write!(f, "name `{n}` declared twice"),
            CmViolation::NotHalting(q) => write!(f, "warning: state `{q}` is final but has outgoing transitions"),
        }
    }
}

impl CounterMachine {
    pub fn num_counters(&self) -> usize {
        self.counters.len()
    }

    pub fn find_state(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn find_counter(&self, name: &str) -> Option<usize> {
        self.counters.iter().position(|s| s == name)
    }

    pub fn validate(&self) -> Vec<CmViolation> {
        let mut out = Vec::new();
        if self.input_arity > self.counters.len() {
            out.push(CmViolation::InputArityTooLarge { arity: self.input_arity, counters: self.counters.len() });
        }
        for names in [&self.states, &self.counters] {
            let mut seen = HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    out.push(CmViolation::DuplicateName(n.clone()));
                }
            }
        }
        let ns = self.states.len();
        for q in [self.init, self.accept, self.reject] {
            if q >= ns {
                out.push(CmViolation::UnknownState(q));
            }
        }
        for (i, t) in self.transitions.iter().enumerate() {
            for q in [t.from, t.to] {
                if q >= ns {
                    out.push(CmViolation::UnknownState(q));
                }
            }
            if let Some(x) = t.ins.counter() {
                if x >= self.counters.len() {
                    out.push(CmViolation::UnknownCounter { transition: i, counter: x });
                }
            }
        }
        for q in [self.accept, self.reject] {
            if q < ns && self.transitions.iter().any(|t| t.from == q) {
                out.push(CmViolation::NotHalting(self.states[q].clone()));
            }
        }
        out
    }

    /// `(q0, (α1, ..., αm, 0, ..., 0))`.
    pub fn initial(&self, input: &InputVector) -> Result<CmConfig, CmError> {
        if input.0.len() != self.input_arity {
            return Err(CmError::ArityMismatch { expected: self.input_arity, found: input.0.len() });
        }
        let mut values = input.0.clone();
        values.resize(self.counters.len(), 0);
        Ok(CmConfig { state: self.init as u32, values })
    }

    /// Successor configurations, sorted and deduplicated.
    pub fn step(&self, c: &CmConfig) -> Vec<CmConfig> {
        let mut out: Vec<CmConfig> = self
            .transitions
            .iter()
            .filter(|t| t.from == c.state as usize)
            .filter_map(|t| t.ins.apply(&c.values).map(|values| CmConfig { state: t.to as u32, values }))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Transitions grouped by source state.
    pub(crate) fn outgoing(&self) -> Vec<Vec<&CmTransition>> {
        let mut by_state = vec![Vec::new(); self.states.len()];
        for t in &self.transitions {
            by_state[t.from].push(t);
        }
        by_state
    }

    /// Exploration cap on the counter sum at input size `n`, from the
    /// declared bound plus slack.
    pub fn sum_cap(&self, n: u64) -> Option<u64> {
        self.bound.map(|b| b.sum_limit(n, self.counters.len()).saturating_add(u64::from(self.slack)))
    }
}

/// Incremental machine construction with state and counter interning, used
/// by the lowering passes.
#[derive(Debug, Default)]
pub struct MachineBuilder {
    name: String,
    counters: IndexMap<String, ()>,
    input_arity: usize,
    states: IndexMap<String, ()>,
    transitions: Vec<CmTransition>,
    seen: HashSet<CmTransition>,
}

impl MachineBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn counter(&mut self, name: impl Into<String>) -> usize {
        let e = self.counters.entry(name.into());
        let i = e.index();
        e.or_insert(());
        i
    }

    pub fn set_input_arity(&mut self, m: usize) {
        self.input_arity = m;
    }

    pub fn state(&mut self, name: impl Into<String>) -> usize {
        let e = self.states.entry(name.into());
        let i = e.index();
        e.or_insert(());
        i
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.states.contains_key(name)
    }

    pub fn lookup_state(&self, name: &str) -> Option<usize> {
        self.states.get_index_of(name)
    }

    /// Adds a transition; exact duplicates are dropped.
    pub fn trans(&mut self, from: usize, ins: Instruction, to: usize) {
        let t = CmTransition { from, ins, to };
        if self.seen.insert(t.clone()) {
            self.transitions.push(t);
        }
    }

    /// Expands an instruction sequence from `from` to `to` through fresh
    /// states `<prefix>#<k>`. The first `len - 1` steps get reverse edges so
    /// a blocked sequence can be backed out of.
    pub fn sequence(&mut self, from: usize, seq: &[Instruction], to: usize, prefix: &str) {
        assert!(!seq.is_empty(), "empty instruction sequence");
        let mut cur = from;
        for (k, &ins) in seq.iter().enumerate() {
            let next = if k + 1 == seq.len() { to } else { self.state(format!("{prefix}#{}", k + 1)) };
            self.trans(cur, ins, next);
            if k + 1 < seq.len() {
                self.trans(next, ins.reverse(), cur);
            }
            cur = next;
        }
    }

    pub fn build(
        self,
        init: usize,
        accept: usize,
        reject: usize,
        bound: Option<BoundClass>,
        slack: u32,
    ) -> CounterMachine {
        CounterMachine {
            name: self.name,
            counters: self.counters.into_keys().collect(),
            input_arity: self.input_arity,
            states: self.states.into_keys().collect(),
            init,
            accept,
            reject,
            bound,
            slack,
            transitions: self.transitions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instruction_semantics() {
        assert_eq!(Instruction::Dec(0).apply(&[0, 3]), None);
        assert_eq!(Instruction::Zero(0).apply(&[0, 3]), Some(vec![0, 3]));
        assert_eq!(Instruction::Nonzero(1).apply(&[0, 3]), Some(vec![0, 3]));
        assert_eq!(Instruction::Inc(1).apply(&[0, 3]), Some(vec![0, 4]));
        for ins in [Instruction::Inc(0), Instruction::Dec(1)] {
            let v = vec![2, 2];
            assert_eq!(ins.reverse().apply(&ins.apply(&v).unwrap()).unwrap(), v);
        }
    }

    #[test]
    fn bound_classes() {
        assert!(BoundClass::N.admits(&[1, 2], 3, 0));
        assert!(!BoundClass::N.admits(&[2, 2], 3, 0));
        assert!(BoundClass::WeakN.admits(&[3, 3], 3, 0));
        assert!(BoundClass::Poly(2).admits(&[5, 4], 3, 0));
        assert!(!BoundClass::Poly(2).admits(&[5, 5], 3, 0));
        for s in ["n", "weak-n", "poly 3"] {
            assert_eq!(s.parse::<BoundClass>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn sequences_get_reverse_edges() {
        let mut b = MachineBuilder::new("m");
        let x = b.counter("x");
        let q = b.state("q");
        let r = b.state("r");
        b.sequence(q, &[Instruction::Dec(x), Instruction::Inc(x), Instruction::Nop], r, "q#m0");
        let m = b.build(q, r, r, None, 0);
        assert_eq!(m.states, ["q", "r", "q#m0#1", "q#m0#2"]);
        assert_eq!(m.transitions.len(), 5);
        assert!(m.transitions.contains(&CmTransition { from: 2, ins: Instruction::Inc(x), to: 0 }));
        assert!(m.transitions.contains(&CmTransition { from: 3, ins: Instruction::Dec(x), to: 2 }));
    }
}

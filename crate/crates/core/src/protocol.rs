//! Data model for population and broadcast consensus protocols.
//!
//! A protocol is plain data: state names, transitions over dense [`StateId`]s,
//! and the input/output/leader maps. Step semantics live in
//! [`crate::semantics`]; the text format lives in [`crate::format`].

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense index of a protocol state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A multiset of states, kept in canonical form: entries sorted by state,
/// every stored count strictly positive.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    entries: Vec<(StateId, u32)>,
}

impl Configuration {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn singleton(state: StateId, count: u32) -> Self {
        Self::from_counts([(state, count)])
    }

    /// Builds a configuration from arbitrary (state, count) pairs; repeated
    /// states are summed and zero counts dropped.
    pub fn from_counts(counts: impl IntoIterator<Item = (StateId, u32)>) -> Self {
        let mut entries: Vec<(StateId, u32)> = counts.into_iter().filter(|&(_, n)| n > 0).collect();
        entries.sort_unstable_by_key(|&(q, _)| q);
        let mut merged: Vec<(StateId, u32)> = Vec::with_capacity(entries.len());
        for (q, n) in entries {
            match merged.last_mut() {
                Some((last, m)) if *last == q => *m += n,
                _ => merged.push((q, n)),
            }
        }
        Self { entries: merged }
    }

    pub fn entries(&self) -> &[(StateId, u32)] {
        &self.entries
    }

    pub fn get(&self, state: StateId) -> u32 {
        match self.entries.binary_search_by_key(&state, |&(q, _)| q) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn size(&self) -> u64 {
        self.entries.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|&(q, _)| q)
    }

    /// Componentwise `self >= other`.
    pub fn covers(&self, other: &Configuration) -> bool {
        other.entries.iter().all(|&(q, n)| self.get(q) >= n)
    }

    pub fn plus(&self, other: &Configuration) -> Configuration {
        Self::from_counts(self.entries.iter().chain(other.entries.iter()).copied())
    }

    /// Truncated multiset difference.
    pub fn minus(&self, other: &Configuration) -> Configuration {
        Self::from_counts(self.entries.iter().map(|&(q, n)| (q, n.saturating_sub(other.get(q)))))
    }

    pub(crate) fn add_one(&mut self, state: StateId) {
        match self.entries.binary_search_by_key(&state, |&(q, _)| q) {
            Ok(i) => self.entries[i].1 += 1,
            Err(i) => self.entries.insert(i, (state, 1)),
        }
    }

    /// Removes one agent from `state`; returns false if none was there.
    pub(crate) fn remove_one(&mut self, state: StateId) -> bool {
        match self.entries.binary_search_by_key(&state, |&(q, _)| q) {
            Ok(i) => {
                if self.entries[i].1 == 1 {
                    self.entries.remove(i);
                } else {
                    self.entries[i].1 -= 1;
                }
                true
            }
            Err(_) => false,
        }
    }

    /// Renders as `q:n` pairs sorted by state name.
    pub fn display<'a>(&'a self, protocol: &'a BroadcastProtocol) -> ConfigDisplay<'a> {
        ConfigDisplay { config: self, protocol }
    }
}

pub struct ConfigDisplay<'a> {
    config: &'a Configuration,
    protocol: &'a BroadcastProtocol,
}

impl fmt::Display for ConfigDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut named: Vec<(&str, u32)> =
            self.config.entries.iter().map(|&(q, n)| (self.protocol.state_name(q), n)).collect();
        named.sort_unstable();
        for (i, (name, n)) in named.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}:{n}")?;
        }
        Ok(())
    }
}

/// Rendez-vous transition `(p, q) -> (p', q')` over ordered pairs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RendezVous {
    pub pre: (StateId, StateId),
    pub post: (StateId, StateId),
}

/// Broadcast transition `q -> r; f`. The transfer map is dense over the
/// protocol's states; protocols often share one map between many broadcasts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Broadcast {
    pub sender: StateId,
    pub post: StateId,
    pub transfer: Arc<[StateId]>,
}

impl Broadcast {
    pub fn receive(&self, state: StateId) -> StateId {
        self.transfer[state.index()]
    }
}

/// Builds the identity transfer over `n` states.
pub fn identity_transfer(n: usize) -> Vec<StateId> {
    (0..n as u32).map(StateId).collect()
}

/// A broadcast consensus protocol `(Q, R, B, Σ, L, I, O)`. A population
/// protocol is the special case with no broadcasts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BroadcastProtocol {
    pub name: String,
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    /// Indexed by alphabet position.
    pub input_map: Vec<StateId>,
    pub leaders: Configuration,
    /// Indexed by state; `true` means output 1.
    pub output: Vec<bool>,
    pub rendezvous: Vec<RendezVous>,
    pub broadcasts: Vec<Broadcast>,
}

/// Input vector indexed by the alphabet's declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InputVector(pub Vec<u32>);

impl InputVector {
    pub fn size(&self) -> u64 {
        self.0.iter().map(|&n| n as u64).sum()
    }
}

impl fmt::Display for InputVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        f.write_str("(")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("population of size {size} is too small (at least 2 agents required)")]
    PopulationTooSmall { size: u64 },
    #[error("input has {found} components but the alphabet has {expected} symbols")]
    InputArity { expected: usize, found: usize },
}

/// One invariant violation found by [`BroadcastProtocol::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoStates,
    EmptyAlphabet,
    DuplicateState(String),
    InputMapArity { expected: usize, found: usize },
    OutputArity { expected: usize, found: usize },
    UnknownState { context: String, index: u32 },
    TransferNotTotal { broadcast: usize, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoStates => write!(f, "state set is empty"),
            Violation::EmptyAlphabet => write!(f, "input alphabet is empty"),
            Violation::DuplicateState(name) => write!(f, "state `{name}` declared twice"),
            Violation::InputMapArity { expected, found } => {
                write!(f, "input map has {found} entries for {expected} symbols")
            }
            Violation::OutputArity { expected, found } => {
                write!(f, "output map has {found} entries for {expected} states")
            }
            Violation::UnknownState { context, index } => {
                write!(f, "{context} names unknown state #{index}")
            }
            Violation::TransferNotTotal { broadcast, expected, found } => {
                write!(f, "transfer of bc{broadcast} is defined on {found} of {expected} states")
            }
        }
    }
}

impl BroadcastProtocol {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_name(&self, q: StateId) -> &str {
        self.states.get(q.index()).map(String::as_str).unwrap_or("?")
    }

    pub fn find_state(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(|i| StateId(i as u32))
    }

    pub fn find_symbol(&self, name: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == name)
    }

    pub fn output_of(&self, q: StateId) -> bool {
        self.output[q.index()]
    }

    pub fn is_population_protocol(&self) -> bool {
        self.broadcasts.is_empty()
    }

    /// Checks every structural invariant; an empty list means the protocol is
    /// well formed.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.states.len();
        let mut out = Vec::new();
        if n == 0 {
            out.push(Violation::NoStates);
        }
        if self.alphabet.is_empty() {
            out.push(Violation::EmptyAlphabet);
        }
        let mut seen = HashSet::new();
        for s in &self.states {
            if !seen.insert(s.as_str()) {
                out.push(Violation::DuplicateState(s.clone()));
            }
        }
        if self.input_map.len() != self.alphabet.len() {
            out.push(Violation::InputMapArity { expected: self.alphabet.len(), found: self.input_map.len() });
        }
        if self.output.len() != n {
            out.push(Violation::OutputArity { expected: n, found: self.output.len() });
        }
        let mut check = |context: String, q: StateId| {
            if q.index() >= n {
                out.push(Violation::UnknownState { context, index: q.0 });
            }
        };
        for (i, &q) in self.input_map.iter().enumerate() {
            check(format!("input map entry {i}"), q);
        }
        for q in self.leaders.support() {
            check("leader multiset".to_string(), q);
        }
        for (i, t) in self.rendezvous.iter().enumerate() {
            for q in [t.pre.0, t.pre.1, t.post.0, t.post.1] {
                check(format!("rv{i}"), q);
            }
        }
        for (i, t) in self.broadcasts.iter().enumerate() {
            check(format!("bc{i} sender"), t.sender);
            check(format!("bc{i} post"), t.post);
            for &q in t.transfer.iter() {
                check(format!("bc{i} transfer"), q);
            }
        }
        for (i, t) in self.broadcasts.iter().enumerate() {
            if t.transfer.len() != n {
                out.push(Violation::TransferNotTotal { broadcast: i, expected: n, found: t.transfer.len() });
            }
        }
        out
    }

    /// `I(X) + L`, rejecting populations with fewer than two agents.
    pub fn initial_configuration(&self, input: &InputVector) -> Result<Configuration, ProtocolError> {
        if input.0.len() != self.alphabet.len() {
            return Err(ProtocolError::InputArity { expected: self.alphabet.len(), found: input.0.len() });
        }
        let agents =
            self.input_map.iter().zip(&input.0).map(|(&q, &n)| (q, n)).chain(self.leaders.entries().iter().copied());
        let c = Configuration::from_counts(agents);
        if c.size() < 2 {
            return Err(ProtocolError::PopulationTooSmall { size: c.size() });
        }
        Ok(c)
    }

    /// Returns a copy whose alphabet symbols are renamed; the input map is
    /// unchanged.
    pub fn with_alphabet(mut self, names: Vec<String>) -> Self {
        assert_eq!(names.len(), self.alphabet.len(), "alphabet renaming changes arity");
        self.alphabet = names;
        self
    }
}

/// Incremental protocol construction with name interning. Transfer maps are
/// registered sparsely (unlisted states map to themselves) and made dense when
/// the protocol is built, so states may be added in any order.
#[derive(Debug, Default)]
pub struct ProtocolBuilder {
    name: String,
    states: IndexMap<String, bool>,
    alphabet: Vec<String>,
    input_map: Vec<StateId>,
    leaders: Vec<(StateId, u32)>,
    rendezvous: Vec<RendezVous>,
    transfers: Vec<Vec<(StateId, StateId)>>,
    broadcasts: Vec<(StateId, StateId, usize)>,
}

/// Handle to a transfer map registered with a [`ProtocolBuilder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransferId(usize);

impl ProtocolBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    /// Interns a state. The output of an already-known state is left alone.
    pub fn state(&mut self, name: impl Into<String>, output: bool) -> StateId {
        let entry = self.states.entry(name.into());
        let id = entry.index();
        entry.or_insert(output);
        StateId(id as u32)
    }

    pub fn lookup(&self, name: &str) -> Option<StateId> {
        self.states.get_index_of(name).map(|i| StateId(i as u32))
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn symbol(&mut self, name: impl Into<String>, initial: StateId) {
        self.alphabet.push(name.into());
        self.input_map.push(initial);
    }

    pub fn leader(&mut self, state: StateId, count: u32) {
        self.leaders.push((state, count));
    }

    pub fn rv(&mut self, p: StateId, q: StateId, p2: StateId, q2: StateId) {
        self.rendezvous.push(RendezVous { pre: (p, q), post: (p2, q2) });
    }

    pub fn transfer(&mut self, entries: Vec<(StateId, StateId)>) -> TransferId {
        self.transfers.push(entries);
        TransferId(self.transfers.len() - 1)
    }

    pub fn identity(&mut self) -> TransferId {
        self.transfer(Vec::new())
    }

    pub fn bc(&mut self, sender: StateId, post: StateId, transfer: TransferId) {
        self.broadcasts.push((sender, post, transfer.0));
    }

    pub fn build(self) -> BroadcastProtocol {
        let n = self.states.len();
        let dense: Vec<Arc<[StateId]>> = self
            .transfers
            .into_iter()
            .map(|entries| {
                let mut f = identity_transfer(n);
                for (from, to) in entries {
                    f[from.index()] = to;
                }
                Arc::from(f)
            })
            .collect();
        let broadcasts = self
            .broadcasts
            .into_iter()
            .map(|(sender, post, t)| Broadcast { sender, post, transfer: Arc::clone(&dense[t]) })
            .collect();
        let (states, output): (Vec<String>, Vec<bool>) = self.states.into_iter().unzip();
        BroadcastProtocol {
            name: self.name,
            states,
            alphabet: self.alphabet,
            input_map: self.input_map,
            leaders: Configuration::from_counts(self.leaders),
            output,
            rendezvous: self.rendezvous,
            broadcasts,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(i: u32) -> StateId {
        StateId(i)
    }

    #[test]
    fn configuration_is_canonical() {
        let a = Configuration::from_counts([(q(2), 1), (q(0), 0), (q(2), 2), (q(1), 1)]);
        let b = Configuration::from_counts([(q(1), 1), (q(2), 3)]);
        assert_eq!(a, b);
        assert_eq!(a.entries(), &[(q(1), 1), (q(2), 3)]);
        assert_eq!(a.size(), 4);
        assert_eq!(a.get(q(0)), 0);
    }

    #[test]
    fn multiset_arithmetic() {
        let a = Configuration::from_counts([(q(0), 2), (q(1), 1)]);
        let b = Configuration::from_counts([(q(0), 3)]);
        assert!(!a.covers(&b));
        assert!(b.covers(&Configuration::singleton(q(0), 2)));
        assert_eq!(a.minus(&b), Configuration::singleton(q(1), 1));
        assert_eq!(a.plus(&b).get(q(0)), 5);
    }

    #[test]
    fn builder_densifies_transfers() {
        let mut b = ProtocolBuilder::new("t");
        let x = b.state("x", false);
        let f = b.transfer(vec![(x, StateId(1))]);
        let y = b.state("y", true);
        b.symbol("a", x);
        b.bc(x, y, f);
        let p = b.build();
        assert!(p.validate().is_empty());
        assert_eq!(&*p.broadcasts[0].transfer, &[y, y]);
    }

    #[test]
    fn initial_configuration_rejects_single_agent() {
        let mut b = ProtocolBuilder::new("t");
        let x = b.state("x", false);
        b.symbol("a", x);
        let p = b.build();
        assert_eq!(p.initial_configuration(&InputVector(vec![1])), Err(ProtocolError::PopulationTooSmall { size: 1 }));
        assert_eq!(p.initial_configuration(&InputVector(vec![3])).unwrap(), Configuration::singleton(x, 3));
    }
}

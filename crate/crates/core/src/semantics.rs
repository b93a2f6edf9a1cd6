//! Single-step semantics: rendez-vous and broadcast application, enabled
//! steps, consensus classification, terminality.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::protocol::{Broadcast, BroadcastProtocol, Configuration, RendezVous, StateId};

/// Names one transition of a protocol. Rendez-vous sort before broadcasts,
/// then by position in the protocol's transition list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransitionRef {
    Rv(u32),
    Bc(u32),
}

impl TransitionRef {
    const BC_BIT: u32 = 1 << 31;

    pub(crate) fn pack(self) -> u32 {
        match self {
            TransitionRef::Rv(i) => i,
            TransitionRef::Bc(i) => i | Self::BC_BIT,
        }
    }

    pub(crate) fn unpack(v: u32) -> Self {
        if v & Self::BC_BIT != 0 {
            TransitionRef::Bc(v & !Self::BC_BIT)
        } else {
            TransitionRef::Rv(v)
        }
    }
}

impl fmt::Display for TransitionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionRef::Rv(i) => write!(f, "rv{i}"),
            TransitionRef::Bc(i) => write!(f, "bc{i}"),
        }
    }
}

impl FromStr for TransitionRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |digits: &str| digits.parse::<u32>().map_err(|_| format!("bad transition id `{s}`"));
        if let Some(d) = s.strip_prefix("rv") {
            Ok(TransitionRef::Rv(parse(d)?))
        } else if let Some(d) = s.strip_prefix("bc") {
            Ok(TransitionRef::Bc(parse(d)?))
        } else {
            Err(format!("bad transition id `{s}`"))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StepError {
    #[error("transition {0} is not enabled")]
    NotEnabled(TransitionRef),
    #[error("transition {0} does not exist")]
    UnknownTransition(TransitionRef),
    #[error("empty configuration has no consensus value")]
    EmptyConfiguration,
}

/// Consensus classification of a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Consensus {
    Zero,
    One,
    Split,
}

impl Consensus {
    pub fn of_bit(b: bool) -> Self {
        if b {
            Consensus::One
        } else {
            Consensus::Zero
        }
    }

    pub fn value(self) -> Option<bool> {
        match self {
            Consensus::Zero => Some(false),
            Consensus::One => Some(true),
            Consensus::Split => None,
        }
    }
}

/// One enabled step: the transition taken and the configuration it yields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub transition: TransitionRef,
    pub target: Configuration,
}

pub fn apply_rendezvous(c: &Configuration, t: &RendezVous) -> Option<Configuration> {
    let (p, q) = t.pre;
    let needed_p = if p == q { 2 } else { 1 };
    if c.get(p) < needed_p || c.get(q) < 1 {
        return None;
    }
    let mut out = c.clone();
    out.remove_one(p);
    out.remove_one(q);
    out.add_one(t.post.0);
    out.add_one(t.post.1);
    Some(out)
}

pub fn apply_broadcast(c: &Configuration, t: &Broadcast) -> Option<Configuration> {
    if c.get(t.sender) == 0 {
        return None;
    }
    let receivers = c.entries().iter().map(|&(q, n)| (t.receive(q), if q == t.sender { n - 1 } else { n }));
    Some(Configuration::from_counts(receivers.chain([(t.post, 1)])))
}

pub fn classify_consensus(p: &BroadcastProtocol, c: &Configuration) -> Result<Consensus, StepError> {
    let mut support = c.support();
    let first = support.next().ok_or(StepError::EmptyConfiguration)?;
    let b = p.output_of(first);
    if support.all(|q| p.output_of(q) == b) {
        Ok(Consensus::of_bit(b))
    } else {
        Ok(Consensus::Split)
    }
}

/// Precomputed transition indices for fast step enumeration.
#[derive(Debug)]
pub struct Semantics<'p> {
    protocol: &'p BroadcastProtocol,
    rv_by_pair: HashMap<(StateId, StateId), Vec<u32>>,
    bc_by_sender: Vec<Vec<u32>>,
}

impl<'p> Semantics<'p> {
    pub fn new(protocol: &'p BroadcastProtocol) -> Self {
        let mut rv_by_pair: HashMap<(StateId, StateId), Vec<u32>> = HashMap::new();
        for (i, t) in protocol.rendezvous.iter().enumerate() {
            rv_by_pair.entry(t.pre).or_default().push(i as u32);
        }
        let mut bc_by_sender = vec![Vec::new(); protocol.num_states()];
        for (i, t) in protocol.broadcasts.iter().enumerate() {
            bc_by_sender[t.sender.index()].push(i as u32);
        }
        Self { protocol, rv_by_pair, bc_by_sender }
    }

    pub fn protocol(&self) -> &'p BroadcastProtocol {
        self.protocol
    }

    pub fn apply(&self, c: &Configuration, t: TransitionRef) -> Result<Configuration, StepError> {
        let result = match t {
            TransitionRef::Rv(i) => {
                let rv = self.protocol.rendezvous.get(i as usize).ok_or(StepError::UnknownTransition(t))?;
                apply_rendezvous(c, rv)
            }
            TransitionRef::Bc(i) => {
                let bc = self.protocol.broadcasts.get(i as usize).ok_or(StepError::UnknownTransition(t))?;
                apply_broadcast(c, bc)
            }
        };
        result.ok_or(StepError::NotEnabled(t))
    }

    /// All enabled steps, sorted by transition reference.
    pub fn enabled_steps(&self, c: &Configuration) -> Vec<Step> {
        let mut out = Vec::new();
        self.for_each_enabled(c, |transition| out.push(transition));
        out.sort_unstable();
        out.into_iter()
            .map(|transition| Step {
                transition,
                target: self.apply(c, transition).expect("enabled transition applies"),
            })
            .collect()
    }

    /// Calls `visit` for every enabled transition, in no particular order.
    pub fn for_each_enabled(&self, c: &Configuration, mut visit: impl FnMut(TransitionRef)) {
        if !self.rv_by_pair.is_empty() {
            for &(p, np) in c.entries() {
                for &(q, _) in c.entries() {
                    if p == q && np < 2 {
                        continue;
                    }
                    if let Some(ids) = self.rv_by_pair.get(&(p, q)) {
                        for &i in ids {
                            visit(TransitionRef::Rv(i));
                        }
                    }
                }
            }
        }
        for &(q, _) in c.entries() {
            for &i in &self.bc_by_sender[q.index()] {
                visit(TransitionRef::Bc(i));
            }
        }
    }

    pub fn classify(&self, c: &Configuration) -> Result<Consensus, StepError> {
        classify_consensus(self.protocol, c)
    }

    /// True iff every enabled step leads back to `c`.
    pub fn is_terminal(&self, c: &Configuration) -> bool {
        let mut terminal = true;
        self.for_each_enabled(c, |t| {
            if terminal && self.apply(c, t).as_ref() != Ok(c) {
                terminal = false;
            }
        });
        terminal
    }
}

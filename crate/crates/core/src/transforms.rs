//! Protocol-to-protocol transformations into restricted subclasses, and the
//! reset-protocol membership check.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::protocol::{BroadcastProtocol, Configuration, InputVector, ProtocolBuilder, StateId};
use crate::semantics::{Semantics, TransitionRef};
use crate::verify::{ConfigGraph, VerifyError, Witness};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransformError {
    #[error("generated state name `{0}` is not unique")]
    NameCollision(String),
    #[error("no input symbol `{0}`")]
    UnknownSymbol(String),
    #[error("protocol has an empty alphabet")]
    EmptyAlphabet,
}

fn add_state(b: &mut ProtocolBuilder, name: String, output: bool) -> Result<StateId, TransformError> {
    if b.lookup(&name).is_some() {
        return Err(TransformError::NameCollision(name));
    }
    Ok(b.state(name, output))
}

/// Copies every state of `p` into `b`, in order, so ids are preserved.
fn copy_states(b: &mut ProtocolBuilder, p: &BroadcastProtocol) {
    for (q, name) in p.states.iter().enumerate() {
        b.state(name.clone(), p.output[q]);
    }
}

/// Result of [`to_leaderless`]. The new protocol on input `α` behaves like the
/// old one on `α` minus `recruited` agents of input `symbol`, and needs at
/// least that many such agents to get started.
#[derive(Clone, Debug)]
pub struct Leaderless {
    pub protocol: BroadcastProtocol,
    pub symbol: usize,
    /// Zero when the protocol had no leaders and is returned unchanged.
    pub recruited: u32,
}

impl Leaderless {
    /// Input of the source protocol matching `input` of the new one.
    pub fn source_input(&self, input: &InputVector) -> Option<InputVector> {
        let mut v = input.0.clone();
        v[self.symbol] = v.get(self.symbol)?.checked_sub(self.recruited)?;
        Some(InputVector(v))
    }

    /// One-line description of the input convention, for file headers.
    pub fn convention(&self) -> String {
        if self.recruited == 0 {
            "no leaders; protocol unchanged".to_string()
        } else {
            format!(
                "input shift: {} agents of `{}` become leaders",
                self.recruited, self.protocol.alphabet[self.symbol]
            )
        }
    }
}

/// Removes the leaders of `p`. Every agent starts in a waiting copy of its
/// input state; one agent of input `symbol` (default: the first symbol)
/// broadcasts to elect itself. With several leaders, the elected agent then
/// recruits the rest from agents of the same input one rendez-vous at a time
/// while everyone else is dormant, and a final broadcast releases everybody
/// into the original initial states.
pub fn to_leaderless(p: &BroadcastProtocol, symbol: Option<&str>) -> Result<Leaderless, TransformError> {
    if p.alphabet.is_empty() {
        return Err(TransformError::EmptyAlphabet);
    }
    let sym = match symbol {
        None => 0,
        Some(s) => p.find_symbol(s).ok_or_else(|| TransformError::UnknownSymbol(s.to_string()))?,
    };
    let leaders: Vec<StateId> =
        p.leaders.entries().iter().flat_map(|&(q, k)| std::iter::repeat_n(q, k as usize)).collect();
    if leaders.is_empty() {
        return Ok(Leaderless { protocol: p.clone(), symbol: sym, recruited: 0 });
    }
    let mut b = ProtocolBuilder::new(p.name.clone());
    copy_states(&mut b, p);
    let out = |q: StateId| p.output[q.index()];
    let pre: Vec<StateId> = p
        .alphabet
        .iter()
        .zip(&p.input_map)
        .map(|(s, &i)| add_state(&mut b, format!("pre/{s}"), out(i)))
        .collect::<Result<_, _>>()?;
    for (s, &q) in p.alphabet.iter().zip(&pre) {
        b.symbol(s.clone(), q);
    }
    let m = leaders.len();
    if m == 1 {
        let f = b.transfer(pre.iter().zip(&p.input_map).map(|(&q, &i)| (q, i)).collect());
        b.bc(pre[sym], leaders[0], f);
    } else {
        let rec: Vec<StateId> =
            (1..=m).map(|j| add_state(&mut b, format!("rec/{j}"), out(leaders[0]))).collect::<Result<_, _>>()?;
        let dorm: Vec<StateId> = p
            .alphabet
            .iter()
            .zip(&p.input_map)
            .map(|(s, &i)| add_state(&mut b, format!("dorm/{s}"), out(i)))
            .collect::<Result<_, _>>()?;
        let mut wait = HashMap::new();
        for &l in &leaders[1..] {
            if let std::collections::hash_map::Entry::Vacant(e) = wait.entry(l) {
                e.insert(add_state(&mut b, format!("wait/{}", p.state_name(l)), out(l))?);
            }
        }
        let elect = b.transfer(pre.iter().zip(&dorm).map(|(&q, &d)| (q, d)).collect());
        b.bc(pre[sym], rec[0], elect);
        for j in 0..m - 1 {
            b.rv(rec[j], dorm[sym], rec[j + 1], wait[&leaders[j + 1]]);
        }
        let mut release: Vec<(StateId, StateId)> = dorm.iter().zip(&p.input_map).map(|(&d, &i)| (d, i)).collect();
        release.extend(wait.iter().map(|(&l, &w)| (w, l)));
        release.sort_unstable();
        let f = b.transfer(release);
        b.bc(rec[m - 1], leaders[0], f);
    }
    copy_transitions(&mut b, p);
    Ok(Leaderless { protocol: b.build(), symbol: sym, recruited: m as u32 })
}

fn copy_transitions(b: &mut ProtocolBuilder, p: &BroadcastProtocol) {
    for t in &p.rendezvous {
        b.rv(t.pre.0, t.pre.1, t.post.0, t.post.1);
    }
    for t in &p.broadcasts {
        let entries = t
            .transfer
            .iter()
            .enumerate()
            .filter(|&(q, &fq)| fq.index() != q)
            .map(|(q, &fq)| (StateId(q as u32), fq))
            .collect();
        let f = b.transfer(entries);
        b.bc(t.sender, t.post, f);
    }
}

/// Result of [`to_single_broadcaster`].
#[derive(Clone, Debug)]
pub struct SingleBroadcaster {
    pub protocol: BroadcastProtocol,
    /// States the broadcasting leader moves within.
    pub leader_states: Vec<StateId>,
}

impl SingleBroadcaster {
    /// Every broadcast is sent from a leader state, the leader cannot leave
    /// the leader states and nobody else can enter them.
    pub fn is_well_formed(&self) -> bool {
        let p = &self.protocol;
        let is_leader = |q: StateId| self.leader_states.contains(&q);
        let leader_count: u32 = p.leaders.entries().iter().filter(|(q, _)| is_leader(*q)).map(|&(_, k)| k).sum();
        leader_count == 1
            && p.input_map.iter().all(|&q| !is_leader(q))
            && p.broadcasts.iter().all(|t| {
                is_leader(t.sender)
                    && is_leader(t.post)
                    && t.transfer.iter().enumerate().all(|(q, &fq)| is_leader(StateId(q as u32)) == is_leader(fq))
            })
            && p.rendezvous
                .iter()
                .all(|t| is_leader(t.pre.0) == is_leader(t.post.0) && is_leader(t.pre.1) == is_leader(t.post.1))
    }
}

/// Delegates every broadcast to one fresh leader. An agent about to broadcast
/// `t` hands the job to the idle leader by rendez-vous and waits in an
/// auxiliary state; the leader then broadcasts `t`'s transfer, which also
/// releases the waiting agent. The leader copies opinions from other agents
/// so it can join their consensus. Inputs are unchanged; the population gains
/// the leader.
pub fn to_single_broadcaster(p: &BroadcastProtocol) -> Result<SingleBroadcaster, TransformError> {
    let mut b = ProtocolBuilder::new(p.name.clone());
    copy_states(&mut b, p);
    for (s, &q) in p.alphabet.iter().zip(&p.input_map) {
        b.symbol(s.clone(), q);
    }
    for &(q, k) in p.leaders.entries() {
        b.leader(q, k);
    }
    let idle = [add_state(&mut b, "lead/0".into(), false)?, add_state(&mut b, "lead/1".into(), true)?];
    let mut leader_states = idle.to_vec();
    b.leader(idle[0], 1);
    // Non-leader states with their outputs; auxiliary states carry their
    // sender's opinion.
    let mut followers: Vec<(StateId, bool)> = (0..p.num_states()).map(|q| (StateId(q as u32), p.output[q])).collect();
    for t in &p.rendezvous {
        b.rv(t.pre.0, t.pre.1, t.post.0, t.post.1);
    }
    for (i, t) in p.broadcasts.iter().enumerate() {
        let opinion = p.output[t.sender.index()];
        let aux = add_state(&mut b, format!("aux/bc{i}"), opinion)?;
        followers.push((aux, opinion));
        let mut entries: Vec<(StateId, StateId)> = t
            .transfer
            .iter()
            .enumerate()
            .filter(|&(q, &fq)| fq.index() != q)
            .map(|(q, &fq)| (StateId(q as u32), fq))
            .collect();
        entries.push((aux, t.post));
        let f = b.transfer(entries);
        for (o, &l) in idle.iter().enumerate() {
            let busy = add_state(&mut b, format!("lead/{o}/bc{i}"), o == 1)?;
            leader_states.push(busy);
            b.rv(t.sender, l, aux, busy);
            b.bc(busy, l, f);
        }
    }
    for (q, out) in followers {
        b.rv(idle[usize::from(!out)], q, idle[usize::from(out)], q);
    }
    Ok(SingleBroadcaster { protocol: b.build(), leader_states })
}

/// Role of an agent in a single-signal protocol, beyond position and origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Normal,
    /// Simulating the given broadcast of the source protocol.
    Broadcasting(usize),
    Frozen,
    Err,
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SignalState {
    pub position: StateId,
    pub origin: StateId,
    pub phase: Phase,
}

#[derive(Clone, Debug)]
pub struct SingleSignal {
    pub protocol: BroadcastProtocol,
    pub states: Vec<SignalState>,
}

impl SingleSignal {
    /// All broadcasts use one transfer map.
    pub fn is_single_signal(&self) -> bool {
        let bs = &self.protocol.broadcasts;
        bs.iter().all(|t| t.transfer == bs[0].transfer)
    }

    pub fn origins_preserved(&self) -> bool {
        let p = &self.protocol;
        let origin = |q: StateId| self.states[q.index()].origin;
        p.rendezvous.iter().all(|t| origin(t.pre.0) == origin(t.post.0) && origin(t.pre.1) == origin(t.post.1))
            && p.broadcasts.iter().all(|t| {
                origin(t.sender) == origin(t.post)
                    && t.transfer.iter().enumerate().all(|(q, &fq)| origin(StateId(q as u32)) == origin(fq))
            })
    }
}

/// Positions any agent can ever occupy, ignoring counts: closure of the
/// initial and leader states under all transitions.
fn structurally_reachable(p: &BroadcastProtocol) -> Vec<bool> {
    let mut seen = vec![false; p.num_states()];
    for &q in p.input_map.iter().chain(p.leaders.support().collect::<Vec<_>>().iter()) {
        seen[q.index()] = true;
    }
    loop {
        let mut changed = false;
        let mut mark = |q: StateId, seen: &mut Vec<bool>| {
            if !seen[q.index()] {
                seen[q.index()] = true;
                changed = true;
            }
        };
        for t in &p.rendezvous {
            if seen[t.pre.0.index()] && seen[t.pre.1.index()] {
                mark(t.post.0, &mut seen);
                mark(t.post.1, &mut seen);
            }
        }
        for t in &p.broadcasts {
            if seen[t.sender.index()] {
                mark(t.post, &mut seen);
                for q in 0..p.num_states() {
                    if seen[q] {
                        mark(t.transfer[q], &mut seen);
                    }
                }
            }
        }
        if !changed {
            return seen;
        }
    }
}

/// Simulates `p`, which should compute its predicate silently with no
/// broadcast enabled at terminal configurations, by a protocol whose
/// broadcasts all send the same "freeze" signal. Agents remember their
/// initial state as their origin; only origins that are input or leader
/// states, and positions reachable from them, are generated.
pub fn to_single_signal(p: &BroadcastProtocol) -> Result<SingleSignal, TransformError> {
    let reach = structurally_reachable(p);
    let positions: Vec<StateId> = (0..p.num_states() as u32).map(StateId).filter(|q| reach[q.index()]).collect();
    let origins: Vec<StateId> =
        p.input_map.iter().copied().chain(p.leaders.support()).collect::<BTreeSet<_>>().into_iter().collect();
    let live_bcs: Vec<usize> = (0..p.broadcasts.len()).filter(|&i| reach[p.broadcasts[i].sender.index()]).collect();

    let mut b = ProtocolBuilder::new(p.name.clone());
    let mut states = Vec::new();
    let mut index: HashMap<SignalState, StateId> = HashMap::new();
    let mut add = |b: &mut ProtocolBuilder, s: SignalState| -> Result<StateId, TransformError> {
        let (q, r) = (p.state_name(s.position), p.state_name(s.origin));
        let name = match s.phase {
            Phase::Normal => format!("({q}|{r})"),
            Phase::Broadcasting(i) => format!("({q}|{r}|bc{i})"),
            Phase::Frozen => format!("({q}|{r}|frozen)"),
            Phase::Err => format!("({q}|{r}|err)"),
            Phase::Reset => format!("({q}|{r}|reset)"),
        };
        let id = add_state(b, name, p.output[s.position.index()])?;
        states.push(s);
        index.insert(s, id);
        Ok(id)
    };
    let st = |position, origin, phase| SignalState { position, origin, phase };
    for &r in &origins {
        for &q in &positions {
            add(&mut b, st(q, r, Phase::Normal))?;
        }
    }
    for &r in &origins {
        for &q in &positions {
            add(&mut b, st(q, r, Phase::Frozen))?;
            add(&mut b, st(q, r, Phase::Err))?;
        }
    }
    for &i in &live_bcs {
        for &r in &origins {
            add(&mut b, st(p.broadcasts[i].post, r, Phase::Broadcasting(i)))?;
        }
    }
    for &r in &origins {
        add(&mut b, st(r, r, Phase::Reset))?;
    }
    let id = |s: SignalState| index[&s];
    for (s, &q) in p.alphabet.iter().zip(&p.input_map) {
        b.symbol(s.clone(), id(st(q, q, Phase::Normal)));
    }
    for &(q, k) in p.leaders.entries() {
        b.leader(id(st(q, q, Phase::Normal)), k);
    }
    let all: Vec<SignalState> = states.clone();
    let normals: Vec<SignalState> = all.iter().copied().filter(|s| s.phase == Phase::Normal).collect();

    let freeze = {
        let entries = all
            .iter()
            .map(|&s| {
                let to = match s.phase {
                    Phase::Normal => st(s.position, s.origin, Phase::Frozen),
                    _ => st(s.position, s.origin, Phase::Err),
                };
                (id(s), id(to))
            })
            .collect();
        b.transfer(entries)
    };

    // Broadcast initiation.
    for &i in &live_bcs {
        let t = &p.broadcasts[i];
        for &r in &origins {
            if reach[t.sender.index()] {
                b.bc(id(st(t.sender, r, Phase::Normal)), id(st(t.post, r, Phase::Broadcasting(i))), freeze);
            }
        }
    }
    // Rendez-vous simulation.
    for t in &p.rendezvous {
        if !(reach[t.pre.0.index()] && reach[t.pre.1.index()]) {
            continue;
        }
        for &r1 in &origins {
            for &r2 in &origins {
                b.rv(
                    id(st(t.pre.0, r1, Phase::Normal)),
                    id(st(t.pre.1, r2, Phase::Normal)),
                    id(st(t.post.0, r1, Phase::Normal)),
                    id(st(t.post.1, r2, Phase::Normal)),
                );
            }
        }
    }
    // Receiver response and completion of a broadcast.
    for &i in &live_bcs {
        let t = &p.broadcasts[i];
        for &r1 in &origins {
            let holder = id(st(t.post, r1, Phase::Broadcasting(i)));
            let done = id(st(t.post, r1, Phase::Normal));
            for &n in &normals {
                let frozen = id(st(n.position, n.origin, Phase::Frozen));
                let woken = id(st(t.transfer[n.position.index()], n.origin, Phase::Normal));
                b.rv(holder, frozen, holder, woken);
            }
            for &n in &normals {
                b.rv(holder, id(n), done, id(n));
            }
        }
    }
    // Reset initiation.
    for &n in &normals {
        b.bc(id(st(n.position, n.origin, Phase::Err)), id(st(n.origin, n.origin, Phase::Reset)), freeze);
    }
    for &r in &origins {
        let reset = id(st(r, r, Phase::Reset));
        // Reset to origin.
        for s in all.iter().filter(|s| s.phase != Phase::Normal) {
            b.rv(reset, id(*s), reset, id(st(s.origin, s.origin, Phase::Normal)));
        }
        // Completion of a reset.
        for &s in &all {
            b.rv(reset, id(s), id(st(r, r, Phase::Normal)), id(s));
        }
    }
    // A frozen agent may give up waiting.
    for &n in &normals {
        let frozen = id(st(n.position, n.origin, Phase::Frozen));
        let err = id(st(n.position, n.origin, Phase::Err));
        for &s in &all {
            b.rv(frozen, id(s), err, id(s));
        }
    }
    Ok(SingleSignal { protocol: b.build(), states })
}

/// Checks at one input that every bottom component is a single terminal
/// configuration at which no broadcast is enabled, the shape the
/// single-signal construction relies on. Returns a witness path to the
/// first offending configuration.
pub fn check_quiet_silence(
    p: &BroadcastProtocol,
    input: &InputVector,
    budget: usize,
) -> Result<Option<Witness>, VerifyError> {
    let initial = p.initial_configuration(input)?;
    let g = ConfigGraph::build(p, initial, budget)?;
    let sem = Semantics::new(p);
    for i in 0..g.len() {
        if !g.is_bottom_node(i) {
            continue;
        }
        let mut broadcast_enabled = false;
        sem.for_each_enabled(g.node(i), |t| broadcast_enabled |= matches!(t, TransitionRef::Bc(_)));
        if g.component_len(g.component(i)) > 1 || broadcast_enabled {
            return Ok(Some(g.path_to(i)));
        }
    }
    Ok(None)
}

/// A broadcast step that does not return to the initial configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResetViolation {
    /// Path from the initial configuration to the step's source.
    pub path: Witness,
    pub transition: TransitionRef,
    pub target: Configuration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResetReportEntry {
    pub input: InputVector,
    pub nodes: usize,
    pub violation: Option<ResetViolation>,
}

impl ResetReportEntry {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Checks that every broadcast from every reachable configuration leads
/// back to the initial configuration. The reported violation is the first
/// in breadth-first order.
pub fn check_reset_protocol(
    p: &BroadcastProtocol,
    inputs: &[InputVector],
    budget: usize,
) -> Vec<Result<ResetReportEntry, VerifyError>> {
    let sem = Semantics::new(p);
    inputs
        .par_iter()
        .map(|input| {
            let initial = p.initial_configuration(input)?;
            let g = ConfigGraph::build(p, initial.clone(), budget)?;
            for i in 0..g.len() {
                for step in sem.enabled_steps(g.node(i)) {
                    if matches!(step.transition, TransitionRef::Bc(_)) && step.target != initial {
                        let violation =
                            ResetViolation { path: g.path_to(i), transition: step.transition, target: step.target };
                        return Ok(ResetReportEntry {
                            input: input.clone(),
                            nodes: g.len(),
                            violation: Some(violation),
                        });
                    }
                }
            }
            Ok(ResetReportEntry { input: input.clone(), nodes: g.len(), violation: None })
        })
        .collect()
}

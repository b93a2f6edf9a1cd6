//! Compilation of n-bounded counter machines into broadcast protocols that
//! silently semi-compute the machine's predicate, and the composition of a
//! protocol pair into one that silently computes it.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::bounding::{tighten, weaken, BoundingError, DEFAULT_MAX_TIGHTEN_COUNTERS};
use crate::cm::{explore, BoundClass, CmConfig, CmError, CounterMachine, ExploreLimits, Instruction};
use crate::protocol::{BroadcastProtocol, Configuration, InputVector, ProtocolBuilder, ProtocolError, StateId};
use crate::verify::{ConfigGraph, VerifyError};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("machine `{name}` must be declared `n`-bounded (declared: {declared})")]
    NotNBounded { name: String, declared: String },
    #[error("counter name `{0}` is reserved")]
    ReservedCounter(String),
    #[error("generated state name `{0}` is not unique")]
    NameCollision(String),
    #[error("alphabets differ: {left:?} vs {right:?}")]
    AlphabetMismatch { left: Vec<String>, right: Vec<String> },
    #[error("leader multisets must both be empty or both a single agent")]
    LeaderMismatch,
    #[error(transparent)]
    Bounding(#[from] BoundingError),
    #[error(transparent)]
    Machine(#[from] CmError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Copy, Debug, Default)]
pub struct CompileOptions {
    /// Also emit the opinion flip from an accepting leader that already holds
    /// opinion 1. It only ever loops, and its reset variant in a composition
    /// keeps accepting configurations from being terminal.
    pub literal_accept_loop: bool,
}

/// Position of a non-leader agent: a counter, idle, or the error position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Position {
    Counter(usize),
    Idle,
    Err,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompiledState {
    /// Leader holding a control state and an opinion.
    Leader { state: usize, opinion: bool },
    /// Non-leader with a position, an input-counter origin and an opinion.
    Agent { position: Position, origin: usize, opinion: bool },
}

impl CompiledState {
    pub fn opinion(self) -> bool {
        match self {
            CompiledState::Leader { opinion, .. } | CompiledState::Agent { opinion, .. } => opinion,
        }
    }
}

/// Bijection between compiled protocol states and their structured meaning.
#[derive(Clone, Debug)]
pub struct CompiledStateMap {
    states: Vec<CompiledState>,
    index: HashMap<CompiledState, StateId>,
}

impl CompiledStateMap {
    pub fn decode(&self, q: StateId) -> CompiledState {
        self.states[q.index()]
    }

    pub fn encode(&self, s: CompiledState) -> Option<StateId> {
        self.index.get(&s).copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

pub struct Compiled {
    pub protocol: BroadcastProtocol,
    pub map: CompiledStateMap,
}

fn position_name(m: &CounterMachine, p: Position) -> &str {
    match p {
        Position::Counter(x) => &m.counters[x],
        Position::Idle => "idle",
        Position::Err => "err",
    }
}

fn state_name(m: &CounterMachine, s: CompiledState) -> String {
    match s {
        CompiledState::Leader { state, opinion } => format!("({},{})", m.states[state], u8::from(opinion)),
        CompiledState::Agent { position, origin, opinion } => {
            format!("({},{},{})", position_name(m, position), m.counters[origin], u8::from(opinion))
        }
    }
}

/// Compiles an `n`-bounded machine. Agent origins range over the input
/// counters and the alphabet is the input counters' names; other counters
/// start empty and are only ever reached from idle agents.
pub fn cm_to_protocol(m: &CounterMachine, opts: &CompileOptions) -> Result<Compiled, CompileError> {
    if m.bound != Some(BoundClass::N) {
        return Err(CompileError::NotNBounded {
            name: m.name.clone(),
            declared: m.bound.map_or_else(|| "nothing".to_string(), |b| b.to_string()),
        });
    }
    if let Some(c) = m.counters.iter().find(|c| *c == "idle" || *c == "err") {
        return Err(CompileError::ReservedCounter(c.clone()));
    }
    let mut b = ProtocolBuilder::new(m.name.clone());
    let mut states = Vec::new();
    let mut index = HashMap::new();
    let mut add = |b: &mut ProtocolBuilder, s: CompiledState| -> Result<StateId, CompileError> {
        let name = state_name(m, s);
        if b.lookup(&name).is_some() {
            return Err(CompileError::NameCollision(name));
        }
        let id = b.state(name, s.opinion());
        states.push(s);
        index.insert(s, id);
        Ok(id)
    };
    let positions: Vec<Position> =
        (0..m.num_counters()).map(Position::Counter).chain([Position::Idle, Position::Err]).collect();
    let origins = 0..m.input_arity;
    let mut leader = vec![[StateId(0); 2]; m.states.len()];
    for (q, ids) in leader.iter_mut().enumerate() {
        for opinion in [false, true] {
            ids[usize::from(opinion)] = add(&mut b, CompiledState::Leader { state: q, opinion })?;
        }
    }
    let mut agent = HashMap::new();
    for y in origins.clone() {
        for &p in &positions {
            for opinion in [false, true] {
                let s = CompiledState::Agent { position: p, origin: y, opinion };
                agent.insert((p, y, opinion), add(&mut b, s)?);
            }
        }
    }
    let ag = |p: Position, y: usize, o: bool| agent[&(p, y, o)];
    for y in origins.clone() {
        b.symbol(m.counters[y].clone(), ag(Position::Counter(y), y, false));
    }
    b.leader(leader[m.init][0], 1);

    let f_rst = {
        let mut entries = Vec::new();
        for ids in &leader {
            for &id in ids {
                entries.push((id, leader[m.init][0]));
            }
        }
        for (&(_, y, _), &id) in &agent {
            entries.push((id, ag(Position::Counter(y), y, false)));
        }
        entries.sort_unstable();
        b.transfer(entries)
    };
    let f_one = {
        let mut entries: Vec<(StateId, StateId)> = leader.iter().map(|ids| (ids[0], ids[1])).collect();
        for (&(p, y, o), &id) in &agent {
            if !o {
                entries.push((id, ag(p, y, true)));
            }
        }
        entries.sort_unstable();
        b.transfer(entries)
    };
    let identity = b.identity();
    let mut f_err = HashMap::new();

    let opinions = [false, true];
    for t in &m.transitions {
        for bq in opinions {
            let (q, r) = (leader[t.from][usize::from(bq)], leader[t.to][usize::from(bq)]);
            match t.ins {
                Instruction::Dec(x) | Instruction::Inc(x) | Instruction::Nonzero(x) => {
                    for y in origins.clone() {
                        for ba in opinions {
                            let xa = ag(Position::Counter(x), y, ba);
                            let idle = ag(Position::Idle, y, ba);
                            match t.ins {
                                Instruction::Dec(_) => b.rv(q, xa, r, idle),
                                Instruction::Inc(_) => b.rv(q, idle, r, xa),
                                _ => b.rv(q, xa, r, xa),
                            }
                        }
                    }
                }
                Instruction::Zero(x) => {
                    let f = *f_err.entry(x).or_insert_with(|| {
                        let mut entries = Vec::new();
                        for y in origins.clone() {
                            for ba in opinions {
                                entries.push((ag(Position::Counter(x), y, ba), ag(Position::Err, y, ba)));
                            }
                        }
                        b.transfer(entries)
                    });
                    b.bc(q, r, f);
                }
                Instruction::Nop => b.bc(q, r, identity),
            }
        }
    }
    for y in origins.clone() {
        for ba in opinions {
            b.bc(ag(Position::Err, y, ba), ag(Position::Counter(y), y, false), f_rst);
        }
    }
    for (q, ids) in leader.iter().enumerate() {
        if q != m.accept {
            for &id in ids {
                b.bc(id, leader[m.init][0], f_rst);
            }
        }
    }
    b.bc(leader[m.accept][0], leader[m.accept][1], f_one);
    if opts.literal_accept_loop {
        b.bc(leader[m.accept][1], leader[m.accept][1], f_one);
    }
    Ok(Compiled { protocol: b.build(), map: CompiledStateMap { states, index } })
}

/// Counter values and leader control state read off a compiled configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Projection {
    pub leaders: Vec<usize>,
    pub values: Vec<u32>,
    pub errors: u32,
}

pub fn project(m: &CounterMachine, map: &CompiledStateMap, c: &Configuration) -> Projection {
    let mut p = Projection { leaders: Vec::new(), values: vec![0; m.num_counters()], errors: 0 };
    for &(q, k) in c.entries() {
        match map.decode(q) {
            CompiledState::Leader { state, .. } => p.leaders.extend(std::iter::repeat_n(state, k as usize)),
            CompiledState::Agent { position: Position::Counter(x), .. } => p.values[x] += k,
            CompiledState::Agent { position: Position::Err, .. } => p.errors += k,
            CompiledState::Agent { position: Position::Idle, .. } => {}
        }
    }
    p
}

/// Outcome of exploring a machine and its compiled protocol side by side.
#[derive(Clone, Debug)]
pub struct Correspondence {
    pub input: InputVector,
    pub machine_nodes: usize,
    pub protocol_nodes: usize,
    /// Reachable machine configurations no error-free protocol configuration
    /// projects to.
    pub forward_missing: Vec<CmConfig>,
    /// Reachable error-free protocol configurations whose projection the
    /// machine cannot reach.
    pub backward_missing: Vec<Configuration>,
    /// Reachable protocol configurations without exactly one leader.
    pub leader_violations: Vec<Configuration>,
}

impl Correspondence {
    pub fn holds(&self) -> bool {
        self.forward_missing.is_empty() && self.backward_missing.is_empty() && self.leader_violations.is_empty()
    }
}

pub fn check_correspondence(
    m: &CounterMachine,
    compiled: &Compiled,
    input: &InputVector,
    budget: usize,
) -> Result<Correspondence, CompileError> {
    let cm_graph = explore(m, input, &ExploreLimits { max_nodes: budget, sum_cap: None })?;
    let initial = compiled.protocol.initial_configuration(input)?;
    let graph = ConfigGraph::build(&compiled.protocol, initial, budget)?;
    let reachable: HashSet<(usize, &[u32])> =
        cm_graph.nodes.iter().map(|c| (c.state as usize, c.values.as_slice())).collect();
    let mut projected = HashSet::new();
    let mut out = Correspondence {
        input: input.clone(),
        machine_nodes: cm_graph.len(),
        protocol_nodes: graph.len(),
        forward_missing: Vec::new(),
        backward_missing: Vec::new(),
        leader_violations: Vec::new(),
    };
    for d in graph.nodes() {
        let p = project(m, &compiled.map, d);
        let [q] = p.leaders[..] else {
            out.leader_violations.push(d.clone());
            continue;
        };
        if p.errors > 0 {
            continue;
        }
        if !reachable.contains(&(q, p.values.as_slice())) {
            out.backward_missing.push(d.clone());
        }
        projected.insert((q, p.values));
    }
    for c in cm_graph.nodes.iter() {
        if !projected.contains(&(c.state as usize, c.values.clone())) {
            out.forward_missing.push(c.clone());
        }
    }
    Ok(out)
}

/// Origin of an agent in a composed protocol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Symbol(usize),
    /// The agent that was a leader in the sub-protocols.
    Leader,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComposedPosition {
    /// A state of sub-protocol 1 (`true`) or 0 (`false`).
    Side(bool, StateId),
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ComposedState {
    pub origin: Origin,
    pub position: ComposedPosition,
}

pub struct Composed {
    pub protocol: BroadcastProtocol,
    pub states: Vec<ComposedState>,
}

impl Composed {
    pub fn decode(&self, q: StateId) -> ComposedState {
        self.states[q.index()]
    }

    /// True iff every transition keeps the origin of every agent it moves.
    pub fn origins_preserved(&self) -> bool {
        let p = &self.protocol;
        let origin = |q: StateId| self.states[q.index()].origin;
        p.rendezvous.iter().all(|t| origin(t.pre.0) == origin(t.post.0) && origin(t.pre.1) == origin(t.post.1))
            && p.broadcasts.iter().all(|t| {
                origin(t.sender) == origin(t.post)
                    && t.transfer.iter().enumerate().all(|(i, &q)| origin(StateId(i as u32)) == origin(q))
            })
    }

    /// Number of agents of each origin in `c`: symbols in alphabet order, then
    /// the leader origin.
    pub fn origin_counts(&self, c: &Configuration) -> Vec<u32> {
        let mut out = vec![0; self.protocol.alphabet.len() + 1];
        for &(q, k) in c.entries() {
            match self.states[q.index()].origin {
                Origin::Symbol(s) => out[s] += k,
                Origin::Leader => *out.last_mut().unwrap() += k,
            }
        }
        out
    }
}

const LEADER_ORIGIN: &str = "*";

fn sole_leader(p: &BroadcastProtocol) -> Result<Option<StateId>, CompileError> {
    match p.leaders.entries() {
        [] => Ok(None),
        [(q, 1)] => Ok(Some(*q)),
        _ => Err(CompileError::LeaderMismatch),
    }
}

/// Composes `p1`, which silently semi-computes a predicate, and `p0`, which
/// silently semi-computes its complement, into a protocol that silently
/// computes the predicate. Agents carry their origin; the simulation starts
/// on the `p0` side and any agent may defect to a reset position, from which
/// it restarts everyone on either side. States on side `i` output `i`.
pub fn compose_silent(p1: &BroadcastProtocol, p0: &BroadcastProtocol) -> Result<Composed, CompileError> {
    if p1.alphabet != p0.alphabet {
        return Err(CompileError::AlphabetMismatch { left: p1.alphabet.clone(), right: p0.alphabet.clone() });
    }
    let leaders = [sole_leader(p0)?, sole_leader(p1)?];
    if leaders[0].is_some() != leaders[1].is_some() {
        return Err(CompileError::LeaderMismatch);
    }
    let sides = [p0, p1];
    let mut origins: Vec<(Origin, &str)> =
        p1.alphabet.iter().enumerate().map(|(i, s)| (Origin::Symbol(i), s.as_str())).collect();
    if leaders[0].is_some() {
        if p1.alphabet.iter().any(|s| s == LEADER_ORIGIN) {
            return Err(CompileError::NameCollision(LEADER_ORIGIN.to_string()));
        }
        origins.push((Origin::Leader, LEADER_ORIGIN));
    }

    let mut b = ProtocolBuilder::new(format!("silent-{}-{}", p1.name, p0.name));
    let mut states = Vec::new();
    let mut add = |b: &mut ProtocolBuilder, name: String, output: bool, s: ComposedState| {
        if b.lookup(&name).is_some() {
            return Err(CompileError::NameCollision(name));
        }
        states.push(s);
        Ok(b.state(name, output))
    };
    // ids[o][i][q] for side states, rst[o] for reset positions.
    let mut ids: Vec<[Vec<StateId>; 2]> = Vec::new();
    let mut rst = Vec::new();
    for &(origin, oname) in &origins {
        let mut per_side: [Vec<StateId>; 2] = [Vec::new(), Vec::new()];
        for (i, p) in sides.iter().enumerate() {
            for (q, qname) in p.states.iter().enumerate() {
                let s = ComposedState { origin, position: ComposedPosition::Side(i == 1, StateId(q as u32)) };
                per_side[i].push(add(&mut b, format!("{oname}/{i}/{qname}"), i == 1, s)?);
            }
        }
        ids.push(per_side);
        rst.push(add(
            &mut b,
            format!("{oname}/rst"),
            false,
            ComposedState { origin, position: ComposedPosition::Reset },
        )?);
    }
    // Initial position of origin `o` on side `i`.
    let start = |o: usize, i: usize| -> StateId {
        match origins[o].0 {
            Origin::Symbol(s) => ids[o][i][sides[i].input_map[s].index()],
            Origin::Leader => ids[o][i][leaders[i].expect("leader origin without leader").index()],
        }
    };
    for (o, &(origin, oname)) in origins.iter().enumerate() {
        match origin {
            Origin::Symbol(_) => b.symbol(oname.to_string(), start(o, 0)),
            Origin::Leader => b.leader(start(o, 0), 1),
        }
    }

    let n_origins = origins.len();
    for (i, p) in sides.iter().enumerate() {
        let side = &ids;
        for t in &p.rendezvous {
            let (q, r) = (t.pre.0.index(), t.pre.1.index());
            let (q2, r2) = (t.post.0.index(), t.post.1.index());
            for o1 in 0..n_origins {
                for o2 in 0..n_origins {
                    b.rv(side[o1][i][q], side[o2][i][r], side[o1][i][q2], side[o2][i][r2]);
                    b.rv(side[o1][i][q], side[o2][i][r], rst[o1], side[o2][i][r2]);
                }
            }
        }
        for t in &p.broadcasts {
            let mut entries = Vec::new();
            for per in side.iter() {
                for (q, &fq) in t.transfer.iter().enumerate() {
                    if fq.index() != q {
                        entries.push((per[i][q], per[i][fq.index()]));
                    }
                }
            }
            let f = b.transfer(entries);
            for o in 0..n_origins {
                b.bc(side[o][i][t.sender.index()], side[o][i][t.post.index()], f);
                b.bc(side[o][i][t.sender.index()], rst[o], f);
            }
        }
    }
    for i in 0..2 {
        let mut entries = Vec::new();
        for o in 0..n_origins {
            let target = start(o, i);
            for per in &ids[o] {
                entries.extend(per.iter().map(|&q| (q, target)));
            }
            entries.push((rst[o], target));
        }
        let f = b.transfer(entries);
        for o in 0..n_origins {
            b.bc(rst[o], start(o, i), f);
        }
    }
    Ok(Composed { protocol: b.build(), states })
}

/// When the counter machines go through the bounding passes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Bounding {
    /// Lower unless the machine is already declared `n`-bounded.
    #[default]
    Auto,
    Always,
    Never,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PipelineOptions {
    pub bounding: Bounding,
    pub compile: CompileOptions,
    pub max_tighten_counters: Option<usize>,
}

pub struct Pipeline {
    /// The `n`-bounded machines actually compiled.
    pub pos_machine: CounterMachine,
    pub neg_machine: CounterMachine,
    pub pos: Compiled,
    pub neg: Compiled,
    pub composed: Composed,
}

pub fn lower(m: &CounterMachine, opts: &PipelineOptions) -> Result<CounterMachine, CompileError> {
    let lower = match opts.bounding {
        Bounding::Auto => m.bound != Some(BoundClass::N),
        Bounding::Always => true,
        Bounding::Never => false,
    };
    if !lower {
        return Ok(m.clone());
    }
    let cap = opts.max_tighten_counters.unwrap_or(DEFAULT_MAX_TIGHTEN_COUNTERS);
    Ok(tighten(&weaken(m)?.machine, cap)?.machine)
}

/// Lowers, compiles and composes a machine for a predicate and a machine for
/// its complement. The compiled alphabets are renamed to `pos`'s input
/// counters, so `neg` only needs the same input arity.
pub fn pipeline(pos: &CounterMachine, neg: &CounterMachine, opts: &PipelineOptions) -> Result<Pipeline, CompileError> {
    let names: Vec<String> = pos.counters[..pos.input_arity].to_vec();
    if neg.input_arity != pos.input_arity {
        return Err(CompileError::AlphabetMismatch { left: names, right: neg.counters[..neg.input_arity].to_vec() });
    }
    let pos_machine = lower(pos, opts)?;
    let neg_machine = lower(neg, opts)?;
    let mut p1 = cm_to_protocol(&pos_machine, &opts.compile)?;
    let mut p0 = cm_to_protocol(&neg_machine, &opts.compile)?;
    p1.protocol = p1.protocol.with_alphabet(names.clone());
    p0.protocol = p0.protocol.with_alphabet(names);
    let mut composed = compose_silent(&p1.protocol, &p0.protocol)?;
    composed.protocol.name = pos.name.clone();
    Ok(Pipeline { pos_machine, neg_machine, pos: p1, neg: p0, composed })
}

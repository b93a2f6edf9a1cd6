//! Exhaustive verification over the configuration graph of one population.
//!
//! Fair executions on a finite graph end up confined to, and covering, a
//! bottom strongly connected component. All checks therefore reduce to
//! properties of the bottom components reachable from the initial
//! configuration.

use std::fmt;

use indexmap::IndexSet;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use rustc_hash::FxBuildHasher;
use serde::Serialize;
use thiserror::Error;

use crate::oracle::OracleError;
use crate::protocol::{BroadcastProtocol, Configuration, InputVector, ProtocolError};
use crate::semantics::{Consensus, Semantics, StepError, TransitionRef};

pub const DEFAULT_NODE_BUDGET: usize = 5_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("exploration exceeded the budget of {0} configurations")]
    BudgetExceeded(usize),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Explicit reachability graph from one initial configuration.
///
/// Nodes are numbered in breadth-first discovery order with successors
/// visited by increasing transition reference, so node order is the order of
/// (distance, lexicographically least path) and each node's BFS parent gives
/// its lexicographically least shortest path.
pub struct ConfigGraph {
    nodes: IndexSet<Configuration, FxBuildHasher>,
    offsets: Vec<usize>,
    edges: Vec<(u32, u32)>,
    parent: Vec<(u32, u32)>,
    component: Vec<u32>,
    component_size: Vec<u32>,
    bottom: Vec<bool>,
}

/// A path from the initial configuration: each step names the transition and
/// the configuration it produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub initial: Configuration,
    pub steps: Vec<(TransitionRef, Configuration)>,
}

impl Witness {
    pub fn last(&self) -> &Configuration {
        self.steps.last().map(|(_, c)| c).unwrap_or(&self.initial)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("step {index}: {source}")]
    Step { index: usize, source: StepError },
    #[error("step {index}: recorded configuration differs from the computed successor")]
    Mismatch { index: usize },
}

/// Re-executes a witness under the core semantics.
pub fn replay(protocol: &BroadcastProtocol, witness: &Witness) -> Result<(), ReplayError> {
    let sem = Semantics::new(protocol);
    let mut current = witness.initial.clone();
    for (index, (t, expected)) in witness.steps.iter().enumerate() {
        let next = sem.apply(&current, *t).map_err(|source| ReplayError::Step { index: index + 1, source })?;
        if &next != expected {
            return Err(ReplayError::Mismatch { index: index + 1 });
        }
        current = next;
    }
    Ok(())
}

impl ConfigGraph {
    pub fn build(protocol: &BroadcastProtocol, initial: Configuration, budget: usize) -> Result<Self, VerifyError> {
        let sem = Semantics::new(protocol);
        let mut nodes: IndexSet<Configuration, FxBuildHasher> = IndexSet::default();
        nodes.insert(initial);
        let mut offsets = vec![0];
        let mut edges = Vec::new();
        let mut parent = vec![(u32::MAX, u32::MAX)];
        let mut i = 0;
        while i < nodes.len() {
            let steps = sem.enabled_steps(&nodes[i]);
            for step in steps {
                let (j, fresh) = nodes.insert_full(step.target);
                if fresh {
                    if nodes.len() > budget {
                        return Err(VerifyError::BudgetExceeded(budget));
                    }
                    parent.push((i as u32, step.transition.pack()));
                }
                edges.push((j as u32, step.transition.pack()));
            }
            offsets.push(edges.len());
            i += 1;
        }
        let mut graph = Self {
            nodes,
            offsets,
            edges,
            parent,
            component: Vec::new(),
            component_size: Vec::new(),
            bottom: Vec::new(),
        };
        graph.decompose();
        Ok(graph)
    }

    fn decompose(&mut self) {
        let n = self.nodes.len();
        let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, self.edges.len());
        for _ in 0..n {
            g.add_node(());
        }
        for u in 0..n {
            for &(v, _) in self.successor_edges(u) {
                if v as usize != u {
                    g.add_edge((u as u32).into(), v.into(), ());
                }
            }
        }
        let sccs = petgraph::algo::kosaraju_scc(&g);
        drop(g);
        // Number components by their smallest node so the numbering does not
        // depend on the SCC algorithm's traversal order.
        let mut comps: Vec<Vec<u32>> = sccs
            .into_iter()
            .map(|c| {
                let mut ids: Vec<u32> = c.into_iter().map(|x| x.index() as u32).collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        comps.sort_unstable_by_key(|c| c[0]);
        self.component = vec![0; n];
        self.component_size = comps.iter().map(|c| c.len() as u32).collect();
        for (k, comp) in comps.iter().enumerate() {
            for &v in comp {
                self.component[v as usize] = k as u32;
            }
        }
        self.bottom = vec![true; comps.len()];
        for u in 0..n {
            let cu = self.component[u];
            if self.successor_edges(u).iter().any(|&(v, _)| self.component[v as usize] != cu) {
                self.bottom[cu as usize] = false;
            }
        }
    }

    fn successor_edges(&self, u: usize) -> &[(u32, u32)] {
        &self.edges[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, i: usize) -> &Configuration {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = &Configuration> {
        self.nodes.iter()
    }

    pub fn index_of(&self, c: &Configuration) -> Option<usize> {
        self.nodes.get_index_of(c)
    }

    /// Outgoing steps of node `i` as (transition, target node).
    pub fn successors(&self, i: usize) -> impl Iterator<Item = (TransitionRef, usize)> + '_ {
        self.successor_edges(i).iter().map(|&(v, t)| (TransitionRef::unpack(t), v as usize))
    }

    pub fn component(&self, i: usize) -> usize {
        self.component[i] as usize
    }

    pub fn component_len(&self, c: usize) -> usize {
        self.component_size[c] as usize
    }

    pub fn num_components(&self) -> usize {
        self.component_size.len()
    }

    pub fn is_bottom_node(&self, i: usize) -> bool {
        self.bottom[self.component[i] as usize]
    }

    pub fn bottom_components(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bottom.len()).filter(|&k| self.bottom[k])
    }

    /// True iff all steps from node `i` are self-loops.
    pub fn is_terminal_node(&self, i: usize) -> bool {
        self.successor_edges(i).iter().all(|&(v, _)| v as usize == i)
    }

    /// Lexicographically least shortest path from the initial configuration.
    pub fn path_to(&self, mut i: usize) -> Witness {
        let mut steps = Vec::new();
        while i != 0 {
            let (p, t) = self.parent[i];
            steps.push((TransitionRef::unpack(t), self.nodes[i].clone()));
            i = p as usize;
        }
        steps.reverse();
        Witness { initial: self.nodes[0].clone(), steps }
    }

    /// Smallest node (hence shortest, lex-least path) satisfying `pred`.
    fn first_node(&self, mut pred: impl FnMut(usize) -> bool) -> Option<usize> {
        (0..self.len()).find(|&i| pred(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Computes,
    Silent,
    Semi,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Computes => "computes",
            Mode::Silent => "silent",
            Mode::Semi => "semi",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "computes" => Ok(Mode::Computes),
            "silent" => Ok(Mode::Silent),
            "semi" => Ok(Mode::Semi),
            _ => Err(format!("unknown mode `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportEntry {
    pub input: InputVector,
    pub expected: bool,
    pub mode: Mode,
    pub verdict: Verdict,
    pub nodes: usize,
    pub witness: Option<Witness>,
}

/// Serializable rendering of a report entry; field order is the output key
/// order.
#[derive(Clone, Debug, Serialize)]
pub struct ReportRecord {
    pub input: Vec<u32>,
    pub expected: u8,
    pub mode: Mode,
    pub verdict: Verdict,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<WitnessStep>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessStep {
    pub step: usize,
    pub transition: String,
    pub config: String,
}

pub fn render_witness(protocol: &BroadcastProtocol, w: &Witness) -> Vec<WitnessStep> {
    let mut out =
        vec![WitnessStep { step: 0, transition: "init".into(), config: w.initial.display(protocol).to_string() }];
    for (i, (t, c)) in w.steps.iter().enumerate() {
        out.push(WitnessStep { step: i + 1, transition: t.to_string(), config: c.display(protocol).to_string() });
    }
    out
}

impl ReportEntry {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn record(&self, protocol: &BroadcastProtocol) -> ReportRecord {
        ReportRecord {
            input: self.input.0.clone(),
            expected: u8::from(self.expected),
            mode: self.mode,
            verdict: self.verdict,
            nodes: self.nodes,
            witness: self.witness.as_ref().map(|w| render_witness(protocol, w)),
        }
    }
}

fn consensus_of(protocol: &BroadcastProtocol, c: &Configuration) -> Consensus {
    crate::semantics::classify_consensus(protocol, c).expect("graph nodes are populations")
}

/// Runs one check on a prebuilt graph.
pub fn check_graph(protocol: &BroadcastProtocol, graph: &ConfigGraph, mode: Mode, expected: bool) -> Option<Witness> {
    let want = Consensus::of_bit(expected);
    let offending = match mode {
        Mode::Computes => {
            graph.first_node(|i| graph.is_bottom_node(i) && consensus_of(protocol, graph.node(i)) != want)
        }
        Mode::Silent => graph.first_node(|i| {
            graph.is_bottom_node(i)
                && (graph.component_len(graph.component(i)) > 1 || consensus_of(protocol, graph.node(i)) != want)
        }),
        Mode::Semi if expected => graph.first_node(|i| {
            graph.is_bottom_node(i)
                && (graph.component_len(graph.component(i)) > 1 || consensus_of(protocol, graph.node(i)) != want)
        }),
        Mode::Semi => graph.first_node(|i| graph.is_terminal_node(i)),
    };
    offending.map(|i| graph.path_to(i))
}

pub fn check(
    protocol: &BroadcastProtocol,
    input: &InputVector,
    mode: Mode,
    expected: bool,
    budget: usize,
) -> Result<ReportEntry, VerifyError> {
    let initial = protocol.initial_configuration(input)?;
    let graph = ConfigGraph::build(protocol, initial, budget)?;
    let witness = check_graph(protocol, &graph, mode, expected);
    Ok(ReportEntry {
        input: input.clone(),
        expected,
        mode,
        verdict: if witness.is_none() { Verdict::Pass } else { Verdict::Fail },
        nodes: graph.len(),
        witness,
    })
}

pub fn check_computes(
    p: &BroadcastProtocol,
    input: &InputVector,
    expected: bool,
    budget: usize,
) -> Result<ReportEntry, VerifyError> {
    check(p, input, Mode::Computes, expected, budget)
}

pub fn check_silently_computes(
    p: &BroadcastProtocol,
    input: &InputVector,
    expected: bool,
    budget: usize,
) -> Result<ReportEntry, VerifyError> {
    check(p, input, Mode::Silent, expected, budget)
}

pub fn check_semi(
    p: &BroadcastProtocol,
    input: &InputVector,
    expected: bool,
    budget: usize,
) -> Result<ReportEntry, VerifyError> {
    check(p, input, Mode::Semi, expected, budget)
}

/// The value every reachable bottom component agrees on, or `None` when the
/// protocol is ill-specified at this input.
pub fn decide_graph(protocol: &BroadcastProtocol, graph: &ConfigGraph) -> Option<bool> {
    let mut value = None;
    for i in 0..graph.len() {
        if !graph.is_bottom_node(i) {
            continue;
        }
        let b = consensus_of(protocol, graph.node(i)).value()?;
        match value {
            None => value = Some(b),
            Some(v) if v != b => return None,
            _ => {}
        }
    }
    value
}

pub fn decide(protocol: &BroadcastProtocol, input: &InputVector, budget: usize) -> Result<Option<bool>, VerifyError> {
    let initial = protocol.initial_configuration(input)?;
    let graph = ConfigGraph::build(protocol, initial, budget)?;
    Ok(decide_graph(protocol, &graph))
}

/// Checks every input in parallel against `oracle`; results keep input order.
pub fn verify_inputs(
    protocol: &BroadcastProtocol,
    inputs: &[InputVector],
    mode: Mode,
    oracle: impl Fn(&InputVector) -> Result<bool, OracleError> + Sync,
    budget: usize,
) -> Vec<Result<ReportEntry, VerifyError>> {
    inputs
        .par_iter()
        .map(|input| {
            let expected = oracle(input)?;
            check(protocol, input, mode, expected, budget)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProtocolBuilder;

    /// a+a -> b+b, b+b -> a+a; plus a sink c reachable from b.
    fn toy() -> BroadcastProtocol {
        let mut b = ProtocolBuilder::new("toy");
        let a = b.state("a", false);
        let bb = b.state("b", false);
        let c = b.state("c", true);
        b.symbol("x", a);
        b.rv(a, a, bb, bb);
        b.rv(bb, bb, a, a);
        let f = b.transfer(vec![(a, c), (bb, c)]);
        b.bc(bb, c, f);
        b.build()
    }

    #[test]
    fn bfs_order_and_components() {
        let p = toy();
        let g = ConfigGraph::build(&p, p.initial_configuration(&InputVector(vec![2])).unwrap(), 100).unwrap();
        assert_eq!(g.len(), 3);
        let c = p.find_state("c").unwrap();
        let sink = g.index_of(&Configuration::singleton(c, 2)).unwrap();
        assert!(g.is_bottom_node(sink));
        assert!(g.is_terminal_node(sink));
        assert!(!g.is_bottom_node(0));
        assert_eq!(g.component(0), g.component(1));
        let w = g.path_to(sink);
        assert_eq!(w.steps.len(), 2);
        replay(&p, &w).unwrap();
        assert_eq!(decide_graph(&p, &g), Some(true));
        assert!(check_graph(&p, &g, Mode::Silent, true).is_none());
        assert!(check_graph(&p, &g, Mode::Semi, false).is_some());
    }

    #[test]
    fn budget_is_enforced() {
        let p = toy();
        let init = p.initial_configuration(&InputVector(vec![2])).unwrap();
        assert_eq!(ConfigGraph::build(&p, init, 2).err(), Some(VerifyError::BudgetExceeded(2)));
    }
}

//! Exhaustive exploration of counter-machine configurations: acceptance,
//! rejection and boundedness checks.

use indexmap::IndexSet;
use rayon::prelude::*;
use rustc_hash::FxBuildHasher;

use crate::oracle::OracleError;
use crate::protocol::InputVector;

use super::{BoundClass, CmConfig, CmError, CounterMachine};

pub const DEFAULT_CM_NODE_BUDGET: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreLimits {
    pub max_nodes: usize,
    /// Explicit counter-sum cap; `None` derives it from the declared bound
    /// and slack (no cap when the machine declares no bound).
    pub sum_cap: Option<u64>,
}

impl Default for ExploreLimits {
    fn default() -> Self {
        Self { max_nodes: DEFAULT_CM_NODE_BUDGET, sum_cap: None }
    }
}

/// Reachable configurations of one run, in breadth-first order, with edges.
pub struct CmGraph {
    pub nodes: IndexSet<CmConfig, FxBuildHasher>,
    pub succ: Vec<Vec<u32>>,
}

impl CmGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes that can reach some node satisfying `target`.
    pub fn co_reachable(&self, target: impl Fn(&CmConfig) -> bool) -> Vec<bool> {
        let n = self.len();
        let mut pred: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (u, vs) in self.succ.iter().enumerate() {
            for &v in vs {
                pred[v as usize].push(u as u32);
            }
        }
        let mut mark = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&i| target(&self.nodes[i])).collect();
        for &i in &stack {
            mark[i] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &pred[v] {
                if !mark[u as usize] {
                    mark[u as usize] = true;
                    stack.push(u as usize);
                }
            }
        }
        mark
    }

    pub fn outcome(&self, m: &CounterMachine) -> CmOutcome {
        outcome_of(m, self)
    }
}

/// Builds the reachable configuration graph from the machine's initial
/// configuration on `input`.
pub fn explore(m: &CounterMachine, input: &InputVector, limits: &ExploreLimits) -> Result<CmGraph, CmError> {
    let initial = m.initial(input)?;
    let cap = limits.sum_cap.or_else(|| m.sum_cap(input.size()));
    let outgoing = m.outgoing();
    let mut nodes: IndexSet<CmConfig, FxBuildHasher> = IndexSet::default();
    nodes.insert(initial);
    let mut succ = Vec::new();
    let mut i = 0;
    while i < nodes.len() {
        let c = nodes[i].clone();
        let mut out = Vec::new();
        for t in &outgoing[c.state as usize] {
            let Some(values) = t.ins.apply(&c.values) else { continue };
            let next = CmConfig { state: t.to as u32, values };
            if let Some(cap) = cap {
                if next.size() > cap {
                    return Err(CmError::SumCapExceeded { cap, sum: next.size() });
                }
            }
            let (j, fresh) = nodes.insert_full(next);
            if fresh && nodes.len() > limits.max_nodes {
                return Err(CmError::BudgetExceeded(limits.max_nodes));
            }
            out.push(j as u32);
        }
        out.sort_unstable();
        out.dedup();
        succ.push(out);
        i += 1;
    }
    Ok(CmGraph { nodes, succ })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmOutcome {
    Accept,
    Reject,
    /// Neither accepts nor rejects: some reachable configuration cannot
    /// reach the rejecting state.
    Neither,
}

pub fn cm_outcome(m: &CounterMachine, input: &InputVector, limits: &ExploreLimits) -> Result<CmOutcome, CmError> {
    let g = explore(m, input, limits)?;
    Ok(outcome_of(m, &g))
}

fn outcome_of(m: &CounterMachine, g: &CmGraph) -> CmOutcome {
    let accept = m.accept as u32;
    if g.nodes.iter().any(|c| c.state == accept) {
        return CmOutcome::Accept;
    }
    let reject = m.reject as u32;
    if g.co_reachable(|c| c.state == reject).iter().all(|&b| b) {
        CmOutcome::Reject
    } else {
        CmOutcome::Neither
    }
}

pub fn cm_accepts(m: &CounterMachine, input: &InputVector, limits: &ExploreLimits) -> Result<bool, CmError> {
    Ok(cm_outcome(m, input, limits)? == CmOutcome::Accept)
}

pub fn cm_rejects(m: &CounterMachine, input: &InputVector, limits: &ExploreLimits) -> Result<bool, CmError> {
    Ok(cm_outcome(m, input, limits)? == CmOutcome::Reject)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CmReportEntry {
    pub input: InputVector,
    pub expected: bool,
    pub outcome: CmOutcome,
    pub nodes: usize,
}

impl CmReportEntry {
    pub fn passed(&self) -> bool {
        self.outcome == if self.expected { CmOutcome::Accept } else { CmOutcome::Reject }
    }
}

/// Per input: the machine must accept iff the oracle says 1 and reject iff
/// it says 0. Results keep input order.
pub fn check_computes(
    m: &CounterMachine,
    oracle: impl Fn(&InputVector) -> Result<bool, OracleError> + Sync,
    inputs: &[InputVector],
    limits: &ExploreLimits,
) -> Vec<Result<CmReportEntry, CmError>> {
    inputs
        .par_iter()
        .map(|input| {
            let expected = oracle(input)?;
            let g = explore(m, input, limits)?;
            Ok(CmReportEntry { input: input.clone(), expected, outcome: outcome_of(m, &g), nodes: g.len() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundReportEntry {
    pub input: InputVector,
    pub bound: BoundClass,
    pub nodes: usize,
    /// First configuration (in breadth-first order) breaking the bound.
    pub violation: Option<CmConfig>,
}

impl BoundReportEntry {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Explores every input and checks `bound` (plus `slack`) on each reachable
/// configuration, stopping at the first violation.
pub fn check_bounded(
    m: &CounterMachine,
    inputs: &[InputVector],
    bound: BoundClass,
    slack: u32,
    max_nodes: usize,
) -> Vec<Result<BoundReportEntry, CmError>> {
    inputs
        .par_iter()
        .map(|input| {
            let n = input.size();
            let initial = m.initial(input)?;
            let outgoing = m.outgoing();
            let mut nodes: IndexSet<CmConfig, FxBuildHasher> = IndexSet::default();
            nodes.insert(initial);
            let mut i = 0;
            while i < nodes.len() {
                if !bound.admits(&nodes[i].values, n, u64::from(slack)) {
                    return Ok(BoundReportEntry {
                        input: input.clone(),
                        bound,
                        nodes: nodes.len(),
                        violation: Some(nodes[i].clone()),
                    });
                }
                let c = nodes[i].clone();
                for t in &outgoing[c.state as usize] {
                    if let Some(values) = t.ins.apply(&c.values) {
                        nodes.insert(CmConfig { state: t.to as u32, values });
                    }
                }
                if nodes.len() > max_nodes {
                    return Err(CmError::BudgetExceeded(max_nodes));
                }
                i += 1;
            }
            Ok(BoundReportEntry { input: input.clone(), bound, nodes: nodes.len(), violation: None })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cm::parse_machine;

    const PUMP: &str = "\
cm pump
counters: x
input-arity: 1
states: q qa qr
init: q accept: qa reject: qr
trans: q inc(x) q
";

    #[test]
    fn unbounded_machine_hits_the_budget() {
        let m = parse_machine(PUMP).unwrap();
        let limits = ExploreLimits { max_nodes: 50, sum_cap: None };
        assert_eq!(cm_accepts(&m, &InputVector(vec![1]), &limits), Err(CmError::BudgetExceeded(50)));
        let capped = ExploreLimits { max_nodes: 50, sum_cap: Some(4) };
        assert!(matches!(cm_accepts(&m, &InputVector(vec![1]), &capped), Err(CmError::SumCapExceeded { cap: 4, .. })));
        let report = check_bounded(&m, &[InputVector(vec![2])], BoundClass::N, 0, 100);
        let entry = report[0].as_ref().unwrap();
        assert_eq!(entry.violation.as_ref().unwrap().values, vec![3]);
    }

    #[test]
    fn livelock_is_neither_accept_nor_reject() {
        let src = "\
cm loop
counters: x
input-arity: 1
states: q p qa qr
init: q accept: qa reject: qr
trans: q nop p
trans: p nop q
trans: q nonzero(x) qr
";
        let m = parse_machine(src).unwrap();
        let limits = ExploreLimits::default();
        assert_eq!(cm_outcome(&m, &InputVector(vec![1]), &limits).unwrap(), CmOutcome::Reject);
        assert_eq!(cm_outcome(&m, &InputVector(vec![0]), &limits).unwrap(), CmOutcome::Neither);
    }
}

//! Worked examples on the power-of-two protocol and the compiled x1 >= x2
//! machine, checked step by step.

use bcp_core::compile::{cm_to_protocol, CompileOptions, CompiledState, Position};
use bcp_core::corpus;
use bcp_core::format::parse_configuration;
use bcp_core::protocol::{BroadcastProtocol, Configuration, InputVector};
use bcp_core::semantics::{Consensus, Semantics, TransitionRef};
use bcp_core::sim::{batch_simulate, simulate, SimParams, SimVerdict};
use bcp_core::verify::{check_computes, check_silently_computes, decide, replay, ConfigGraph, Verdict};

const BUDGET: usize = 1_000_000;

// Transition order in the corpus file.
const S: TransitionRef = TransitionRef::Rv(0);
const R: TransitionRef = TransitionRef::Bc(0);
const S_BAR: TransitionRef = TransitionRef::Bc(1);
const T0: TransitionRef = TransitionRef::Bc(3);
const T1: TransitionRef = TransitionRef::Bc(4);

fn power2() -> BroadcastProtocol {
    corpus::protocol("power2").unwrap()
}

fn conf(p: &BroadcastProtocol, text: &str) -> Configuration {
    parse_configuration(p, text).unwrap()
}

fn input(x: u32) -> InputVector {
    InputVector(vec![x])
}

#[test]
fn validates_and_starts_with_all_agents_in_x() {
    let p = power2();
    assert!(p.validate().is_empty());
    assert_eq!(p.initial_configuration(&input(4)).unwrap(), conf(&p, "x:4"));
    assert!(p.initial_configuration(&input(1)).is_err());
}

#[test]
fn pairing_two_x_agents() {
    let p = power2();
    let sem = Semantics::new(&p);
    assert_eq!(sem.apply(&conf(&p, "x:4"), S).unwrap(), conf(&p, "x:2 xbar:1 0:1"));
}

#[test]
fn broadcasts_move_every_receiver() {
    let p = power2();
    let sem = Semantics::new(&p);
    assert_eq!(sem.apply(&conf(&p, "xbar:1 0:2"), S_BAR).unwrap(), conf(&p, "x:1 1:2"));
    assert_eq!(sem.apply(&conf(&p, "bot:1 0:2 1:1"), R).unwrap(), conf(&p, "x:4"));
    assert!(sem.apply(&conf(&p, "0:2 1:1"), R).is_err());
}

#[test]
fn enabled_steps_from_two_x_agents() {
    let p = power2();
    let sem = Semantics::new(&p);
    let steps: Vec<(TransitionRef, Configuration)> =
        sem.enabled_steps(&conf(&p, "x:2")).into_iter().map(|s| (s.transition, s.target)).collect();
    // Only transitions whose sender or participants are `x` fire here.
    assert_eq!(steps, vec![(S, conf(&p, "xbar:1 0:1")), (T0, conf(&p, "0:1 bot:1")), (T1, conf(&p, "1:1 bot:1")),]);
    assert!(sem.enabled_steps(&conf(&p, "1:3")).is_empty());
}

#[test]
fn consensus_and_terminality() {
    let p = power2();
    let sem = Semantics::new(&p);
    assert_eq!(sem.classify(&conf(&p, "1:4")).unwrap(), Consensus::One);
    assert_eq!(sem.classify(&conf(&p, "x:2 1:1")).unwrap(), Consensus::Split);
    assert!(!sem.is_terminal(&conf(&p, "1:2 bot:1")));
    assert!(sem.is_terminal(&conf(&p, "1:3")));
}

#[test]
fn small_graphs_have_the_expected_bottoms() {
    let p = power2();
    let g2 = ConfigGraph::build(&p, conf(&p, "x:2"), BUDGET).unwrap();
    let bottoms: Vec<&Configuration> = (0..g2.len()).filter(|&i| g2.is_bottom_node(i)).map(|i| g2.node(i)).collect();
    assert_eq!(bottoms, vec![&conf(&p, "1:2")]);
    let g3 = ConfigGraph::build(&p, conf(&p, "x:3"), BUDGET).unwrap();
    let sem = Semantics::new(&p);
    for i in (0..g3.len()).filter(|&i| g3.is_bottom_node(i)) {
        assert_eq!(g3.component_len(g3.component(i)), 1);
        assert_eq!(sem.classify(g3.node(i)).unwrap(), Consensus::Zero);
    }
}

#[test]
fn exhaustive_checks() {
    let p = power2();
    assert_eq!(check_computes(&p, &input(4), true, BUDGET).unwrap().verdict, Verdict::Pass);
    assert_eq!(check_computes(&p, &input(2), true, BUDGET).unwrap().verdict, Verdict::Pass);
    let six = check_computes(&p, &input(6), true, BUDGET).unwrap();
    assert_eq!(six.verdict, Verdict::Fail);
    let w = six.witness.expect("failing entries carry a witness");
    assert!(replay(&p, &w).is_ok());
    assert_ne!(Semantics::new(&p).classify(w.last()).unwrap(), Consensus::One);
    assert_eq!(decide(&p, &input(8), BUDGET).unwrap(), Some(true));
    assert_eq!(decide(&p, &input(5), BUDGET).unwrap(), Some(false));
}

#[test]
fn power2_is_silent_at_four_agents() {
    // Regression value: every bottom component at size 4 is the terminal
    // configuration {1:4}, reached within 14 configurations.
    let p = power2();
    let e = check_silently_computes(&p, &input(4), true, BUDGET).unwrap();
    assert_eq!(e.verdict, Verdict::Pass);
    assert_eq!(e.nodes, 14);
}

#[test]
fn simulation_reaches_the_right_consensus() {
    let p = power2();
    let params = SimParams::default();
    for seed in 0..5 {
        assert_eq!(simulate(&p, &input(4), seed, &params).unwrap().verdict.value(), Some(true));
        assert_eq!(simulate(&p, &input(3), seed, &params).unwrap().verdict.value(), Some(false));
    }
}

#[test]
fn batch_over_two_to_nine() {
    let p = power2();
    let inputs: Vec<InputVector> = (2..=9).map(input).collect();
    let seeds: Vec<u64> = (0..10).collect();
    let out = batch_simulate(&p, &inputs, &seeds, &SimParams::default());
    assert_eq!(out.len(), 80);
    for s in out {
        let s = s.unwrap();
        let exact = decide(&p, &s.input, BUDGET).unwrap();
        assert_eq!(s.verdict.value(), exact, "{} seed {}", s.input, s.seed);
        assert!(matches!(s.verdict, SimVerdict::Terminal { .. }));
        assert_eq!(exact, Some(matches!(s.input.0[0], 2 | 4 | 8)));
    }
    assert!(batch_simulate(&p, &[], &seeds, &SimParams::default()).is_empty());
}

#[test]
fn compiled_machine_initial_configuration() {
    let m = corpus::machine("cm-geq").unwrap();
    let c = cm_to_protocol(&m, &CompileOptions::default()).unwrap();
    let p = &c.protocol;
    let expected = conf(p, "(x1,x1,0):2 (x2,x2,0):1 (q0,0):1");
    assert_eq!(p.initial_configuration(&InputVector(vec![2, 1])).unwrap(), expected);
}

#[test]
fn compiled_machine_is_terminal_after_accepting() {
    let m = corpus::machine("cm-geq").unwrap();
    let c = cm_to_protocol(&m, &CompileOptions::default()).unwrap();
    let p = &c.protocol;
    let sem = Semantics::new(p);
    let g = ConfigGraph::build(p, p.initial_configuration(&InputVector(vec![2, 1])).unwrap(), BUDGET).unwrap();
    let accepted = |cfg: &Configuration| {
        cfg.entries().iter().all(|&(q, _)| match c.map.decode(q) {
            CompiledState::Leader { state, opinion } => state == m.accept && opinion,
            CompiledState::Agent { position, opinion, .. } => opinion && position != Position::Err,
        })
    };
    let hits: Vec<usize> = (0..g.len()).filter(|&i| accepted(g.node(i))).collect();
    assert!(!hits.is_empty());
    for i in hits {
        assert!(sem.is_terminal(g.node(i)), "{}", g.node(i).display(p));
    }
}

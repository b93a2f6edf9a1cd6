use std::collections::BTreeSet;

use bcp_core::bounding::{tighten, weaken, BoundingError, DEFAULT_MAX_TIGHTEN_COUNTERS};
use bcp_core::cm::{check_bounded, check_computes, explore, BoundClass, CounterMachine, ExploreLimits};
use bcp_core::corpus;
use bcp_core::oracle::inputs_with_sum_at_most;

fn agrees(m: &CounterMachine, name: &str, max_sum: u32) {
    let builtin = corpus::entry(name).unwrap().builtin.unwrap();
    let inputs = inputs_with_sum_at_most(m.input_arity, max_sum);
    for r in check_computes(m, |i| builtin.eval(i), &inputs, &ExploreLimits::default()) {
        let e = r.unwrap();
        assert!(e.passed(), "{} on {}: {:?}", m.name, e.input, e.outcome);
    }
}

fn bounded(m: &CounterMachine, bound: BoundClass, max_sum: u32) {
    let inputs = inputs_with_sum_at_most(m.input_arity, max_sum);
    for r in check_bounded(m, &inputs, bound, 0, 5_000_000) {
        let e = r.unwrap();
        assert!(e.passed(), "{} on {}: {:?}", m.name, e.input, e.violation);
    }
}

#[test]
fn weaken_preserves_every_corpus_machine() {
    for e in corpus::machines() {
        let m = corpus::machine(e.name).unwrap();
        let w = weaken(&m).unwrap();
        assert!(w.machine.validate().iter().all(|v| v.is_warning()));
        let max = if e.name == "cm-double-geq" { 3 } else { 5 };
        agrees(&w.machine, e.name, max);
        bounded(&w.machine, BoundClass::WeakN, max);
    }
}

#[test]
fn double_geq_needs_two_digits() {
    let m = corpus::machine("cm-double-geq").unwrap();
    let w = weaken(&m).unwrap();
    assert_eq!(w.num_digits(), 2);
    assert_eq!(&w.machine.counters[..2], ["x1.0", "x2.0"]);
}

#[test]
fn weaken_then_tighten_preserves_geq_and_even() {
    for name in ["cm-geq", "cm-even", "cm-lt", "cm-odd"] {
        let m = corpus::machine(name).unwrap();
        let t = tighten(&weaken(&m).unwrap().machine, DEFAULT_MAX_TIGHTEN_COUNTERS).unwrap();
        let max = if matches!(name, "cm-geq" | "cm-lt") { 3 } else { 5 };
        agrees(&t.machine, name, max);
        bounded(&t.machine, BoundClass::N, max);
    }
}

#[test]
fn tighten_directly_preserves_every_n_bounded_machine() {
    for e in corpus::machines().filter(|e| e.name != "cm-double-geq") {
        let m = corpus::machine(e.name).unwrap();
        let t = tighten(&m, DEFAULT_MAX_TIGHTEN_COUNTERS).unwrap();
        agrees(&t.machine, e.name, 6);
        bounded(&t.machine, BoundClass::N, 6);
    }
}

/// Configurations of the lowered machine sitting in a source state decode to
/// exactly the source machine's reachable configurations, with the auxiliary
/// counters back at zn = n, z0 = 0.
#[test]
fn weakened_source_states_match_source_reachability() {
    for name in ["cm-geq", "cm-div3", "cm-double-geq"] {
        let m = corpus::machine(name).unwrap();
        let w = weaken(&m).unwrap();
        for input in inputs_with_sum_at_most(m.input_arity, 3) {
            let n = input.size() as u32;
            let src = explore(&m, &input, &ExploreLimits::default()).unwrap();
            let expected: BTreeSet<(u32, Vec<u64>)> =
                src.nodes.iter().map(|c| (c.state, c.values.iter().map(|&v| u64::from(v)).collect())).collect();
            let low = explore(&w.machine, &input, &ExploreLimits::default()).unwrap();
            let mut seen = BTreeSet::new();
            for c in low.nodes.iter().filter(|c| (c.state as usize) < m.states.len()) {
                assert_eq!(c.values[w.zn], n, "{name} {input}");
                assert_eq!(c.values[w.z0], 0, "{name} {input}");
                seen.insert((c.state, w.decode(&c.values, n)));
            }
            assert_eq!(seen, expected, "{name} {input}");
        }
    }
}

#[test]
fn tightened_source_states_match_source_reachability() {
    let m = corpus::machine("cm-geq").unwrap();
    let t = tighten(&m, DEFAULT_MAX_TIGHTEN_COUNTERS).unwrap();
    for input in inputs_with_sum_at_most(2, 4) {
        let src = explore(&m, &input, &ExploreLimits::default()).unwrap();
        let expected: BTreeSet<(u32, Vec<u32>)> = src.nodes.iter().map(|c| (c.state, c.values.clone())).collect();
        let low = explore(&t.machine, &input, &ExploreLimits::default()).unwrap();
        let seen: BTreeSet<(u32, Vec<u32>)> = low
            .nodes
            .iter()
            .filter(|c| (c.state as usize) < m.states.len())
            .map(|c| (c.state, t.decode(&c.values)))
            .collect();
        assert_eq!(seen, expected, "{input}");
        for c in low.nodes.iter().filter(|c| (c.state as usize) < m.states.len()) {
            assert_eq!(c.size(), input.size());
        }
    }
}

#[test]
fn missing_bound_and_too_many_counters_are_rejected() {
    let mut m = corpus::machine("cm-geq").unwrap();
    m.bound = None;
    assert!(matches!(weaken(&m), Err(BoundingError::MissingBoundDeclaration(_))));
    assert!(matches!(tighten(&m, 8), Err(BoundingError::MissingBoundDeclaration(_))));
    let m = corpus::machine("cm-geq").unwrap();
    assert!(matches!(tighten(&m, 1), Err(BoundingError::CounterCountTooLarge { counters: 2, .. })));
    let m = corpus::machine("cm-double-geq").unwrap();
    assert!(matches!(tighten(&m, 8), Err(BoundingError::WrongBoundClass { .. })));
}

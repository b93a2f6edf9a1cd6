use bcp_core::cm::BoundClass;
use bcp_core::compile::{
    check_correspondence, cm_to_protocol, compose_silent, lower, pipeline, Bounding, CompileError, CompileOptions,
    CompiledState, Origin, PipelineOptions,
};
use bcp_core::corpus;
use bcp_core::oracle::{inputs_with_sum_at_most, Builtin};
use bcp_core::protocol::InputVector;
use bcp_core::semantics::{Semantics, TransitionRef};
use bcp_core::verify::{check_semi, check_silently_computes, ConfigGraph};

const BUDGET: usize = 5_000_000;

fn populated(arity: usize, max: u32) -> Vec<InputVector> {
    inputs_with_sum_at_most(arity, max).into_iter().filter(|i| i.size() >= 1).collect()
}

#[test]
fn compiled_geq_semi_computes_and_corresponds() {
    let m = corpus::machine("cm-geq").unwrap();
    let c = cm_to_protocol(&m, &CompileOptions::default()).unwrap();
    assert!(c.protocol.validate().is_empty());
    assert_eq!(c.protocol.leaders.size(), 1);
    for input in populated(2, 4) {
        let expected = Builtin::Geq.eval(&input).unwrap();
        let e = check_semi(&c.protocol, &input, expected, BUDGET).unwrap();
        assert!(e.passed(), "{input}");
        let corr = check_correspondence(&m, &c, &input, BUDGET).unwrap();
        assert!(corr.holds(), "{input}: {corr:?}");
    }
}

#[test]
fn compiled_state_names_round_trip_through_the_map() {
    let m = corpus::machine("cm-geq").unwrap();
    let c = cm_to_protocol(&m, &CompileOptions::default()).unwrap();
    assert_eq!(c.map.len(), c.protocol.num_states());
    let q0 = c.protocol.find_state("(q0,0)").unwrap();
    assert_eq!(c.map.decode(q0), CompiledState::Leader { state: m.init, opinion: false });
    let idle = c.protocol.find_state("(idle,x2,1)").unwrap();
    assert_eq!(c.map.encode(c.map.decode(idle)), Some(idle));
    assert_eq!(c.protocol.input_map[0], c.protocol.find_state("(x1,x1,0)").unwrap());
}

#[test]
fn lowered_machines_compile_and_semi_compute() {
    let m = corpus::machine("cm-geq").unwrap();
    let opts = PipelineOptions { bounding: Bounding::Always, ..Default::default() };
    let low = lower(&m, &opts).unwrap();
    assert_eq!(low.bound, Some(BoundClass::N));
    let c = cm_to_protocol(&low, &CompileOptions::default()).unwrap();
    for input in populated(2, 3) {
        let expected = Builtin::Geq.eval(&input).unwrap();
        assert!(check_semi(&c.protocol, &input, expected, BUDGET).unwrap().passed(), "{input}");
    }
}

#[test]
fn accepting_loop_only_ever_loops() {
    let m = corpus::machine("cm-geq").unwrap();
    let opts = CompileOptions { literal_accept_loop: true };
    let c = cm_to_protocol(&m, &opts).unwrap();
    let looping = TransitionRef::Bc(c.protocol.broadcasts.len() as u32 - 1);
    let sem = Semantics::new(&c.protocol);
    for input in populated(2, 3) {
        let initial = c.protocol.initial_configuration(&input).unwrap();
        let g = ConfigGraph::build(&c.protocol, initial, BUDGET).unwrap();
        for d in g.nodes() {
            if let Ok(next) = sem.apply(d, looping) {
                assert_eq!(&next, d);
            }
        }
    }
}

#[test]
fn machines_without_n_bound_are_refused() {
    let m = corpus::machine("cm-double-geq").unwrap();
    assert!(matches!(cm_to_protocol(&m, &CompileOptions::default()), Err(CompileError::NotNBounded { .. })));
}

#[test]
fn pipeline_geq_lt_silently_computes_geq() {
    let pos = corpus::machine("cm-geq").unwrap();
    let neg = corpus::machine("cm-lt").unwrap();
    let p = pipeline(&pos, &neg, &PipelineOptions::default()).unwrap();
    let composed = &p.composed;
    assert!(composed.protocol.validate().is_empty());
    assert!(composed.origins_preserved());
    assert_eq!(composed.protocol.alphabet, ["x1", "x2"]);
    for input in populated(2, 4) {
        let expected = Builtin::Geq.eval(&input).unwrap();
        let e = check_silently_computes(&composed.protocol, &input, expected, BUDGET).unwrap();
        assert!(e.passed(), "{input}");
        let initial = composed.protocol.initial_configuration(&input).unwrap();
        let g = ConfigGraph::build(&composed.protocol, initial, BUDGET).unwrap();
        let mut want = input.0.clone();
        want.push(1);
        for d in g.nodes() {
            assert_eq!(composed.origin_counts(d), want);
            let leaders: u32 =
                d.entries().iter().filter(|(q, _)| composed.decode(*q).origin == Origin::Leader).map(|&(_, k)| k).sum();
            assert_eq!(leaders, 1);
        }
    }
}

#[test]
fn pipeline_even_odd_silently_computes_evenness() {
    let pos = corpus::machine("cm-even").unwrap();
    let neg = corpus::machine("cm-odd").unwrap();
    let p = pipeline(&pos, &neg, &PipelineOptions::default()).unwrap();
    for x in 1..=6 {
        let input = InputVector(vec![x]);
        let e = check_silently_computes(&p.composed.protocol, &input, x % 2 == 0, BUDGET).unwrap();
        assert!(e.passed(), "{input}");
    }
}

#[test]
fn compose_requires_matching_alphabets() {
    let geq = cm_to_protocol(&corpus::machine("cm-geq").unwrap(), &CompileOptions::default()).unwrap();
    let even = cm_to_protocol(&corpus::machine("cm-even").unwrap(), &CompileOptions::default()).unwrap();
    assert!(matches!(compose_silent(&geq.protocol, &even.protocol), Err(CompileError::AlphabetMismatch { .. })));
}

use bcp_core::cm::{check_computes as cm_check_computes, parse_machine, serialize_machine, ExploreLimits};
use bcp_core::corpus::{self, Kind, CATALOG};
use bcp_core::format::{parse_protocol, serialize_protocol};
use bcp_core::oracle::{inputs_with_sum_at_most, Builtin};
use bcp_core::protocol::InputVector;
use bcp_core::verify::check_computes;

#[test]
fn every_entry_parses_validates_and_round_trips() {
    for e in CATALOG {
        match e.kind {
            Kind::Protocol => {
                let p = parse_protocol(e.source).unwrap();
                assert!(p.validate().is_empty(), "{}", e.name);
                let text = serialize_protocol(&p);
                assert_eq!(parse_protocol(&text).unwrap(), p, "{}", e.name);
            }
            Kind::Machine => {
                let m = parse_machine(e.source).unwrap();
                assert!(m.validate().is_empty(), "{}", e.name);
                let text = serialize_machine(&m);
                assert_eq!(parse_machine(&text).unwrap(), m, "{}", e.name);
            }
        }
    }
    assert!(corpus::load("nope").is_err());
}

#[test]
fn power2_shape() {
    let p = corpus::protocol("power2").unwrap();
    assert_eq!(p.num_states(), 6);
    assert_eq!(p.rendezvous.len(), 1);
    assert_eq!(p.broadcasts.len(), 5);
    assert!(p.leaders.is_empty());
}

#[test]
fn machines_compute_their_predicates() {
    for e in corpus::machines() {
        let m = corpus::machine(e.name).unwrap();
        let b = e.builtin.unwrap();
        let inputs = inputs_with_sum_at_most(b.arity(), 6);
        for r in cm_check_computes(&m, |i| b.eval(i), &inputs, &ExploreLimits::default()) {
            let r = r.unwrap();
            assert!(r.passed(), "{} on {}: {:?}", e.name, r.input, r.outcome);
        }
    }
}

#[test]
fn majority_verifies() {
    let p = corpus::protocol("majority").unwrap();
    for input in inputs_with_sum_at_most(2, 8).into_iter().filter(|i| i.size() >= 2) {
        let expected = Builtin::Majority.eval(&input).unwrap();
        assert!(check_computes(&p, &input, expected, 1_000_000).unwrap().passed(), "{input}");
    }
    assert!(p.initial_configuration(&InputVector(vec![1, 0])).is_err());
}

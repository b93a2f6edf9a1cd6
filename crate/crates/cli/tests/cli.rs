use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bcp_core::cm::parse_machine;
use bcp_core::format::parse_protocol;

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name).to_string_lossy().into_owned()
}

fn bcp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bcp")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn version_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let v = bcp(dir.path(), &["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).starts_with("bcp "));
    assert_eq!(bcp(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        bcp(dir.path(), &["verify", "missing.bcp", "--builtin", "power2", "--inputs", "2"]).status.code(),
        Some(2)
    );
    let p2 = corpus("power2.bcp");
    // A two-input oracle cannot judge a one-input protocol.
    let o = bcp(dir.path(), &["verify", &p2, "--builtin", "majority", "--inputs", "2..4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("oracle takes 2 inputs"));
    assert_eq!(bcp(dir.path(), &["verify", &p2, "--builtin", "power2", "--inputs", "4..2"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_fails_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let p2 = corpus("power2.bcp");
    let ok = bcp(dir.path(), &["verify", &p2, "--mode", "computes", "--builtin", "power2", "--inputs", "2..9"]);
    assert_eq!(ok.status.code(), Some(0));
    let lines: Vec<String> = stdout(&ok).lines().map(String::from).collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], r#"{"input":[2],"expected":1,"mode":"computes","verdict":"pass","nodes":6}"#);

    let bad = bcp(dir.path(), &["verify", &p2, "--builtin", "threshold:3", "--inputs", "2..4", "--report", "r.jsonl"]);
    assert_eq!(bad.status.code(), Some(1));
    let report = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
    let failing: Vec<&str> = report.lines().filter(|l| l.contains(r#""verdict":"fail""#)).collect();
    assert_eq!(failing.len(), 2);
    assert!(failing.iter().all(|l| l.contains(r#""witness":[{"step":0,"transition":"init""#)));
}

#[test]
fn budget_overrun_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcp(
        dir.path(),
        &["--budget", "10", "verify", &corpus("power2.bcp"), "--builtin", "power2", "--inputs", "2..5"],
    );
    assert_eq!(o.status.code(), Some(3));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 4);
    assert!(out.lines().nth(2).unwrap().contains(r#""error""#));
}

#[test]
fn corpus_names_stand_in_for_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bcp(dir.path(), &["validate", "power2"]).status.code(), Some(0));
    assert_eq!(bcp(dir.path(), &["validate", "cm-double-geq"]).status.code(), Some(0));
    let o = bcp(dir.path(), &["verify", "majority", "--builtin", "majority", "--inputs", "sum<=5"]);
    assert_eq!(o.status.code(), Some(0));
    // Sums 2..=5 over two symbols.
    assert_eq!(stdout(&o).lines().count(), 3 + 4 + 5 + 6);
}

#[test]
fn validate_reports_violations() {
    let dir = tempfile::tempdir().unwrap();
    let src = "protocol broken\nstates: a b\nalphabet: x\ninput: x -> a\noutput1: b\nbc: a -> b ; a -> b\n";
    std::fs::write(dir.path().join("b.bcp"), src).unwrap();
    let ok = bcp(dir.path(), &["validate", "b.bcp"]);
    assert_eq!(ok.status.code(), Some(0));
    std::fs::write(dir.path().join("bad.bcp"), "protocol x\nstates: a\nrv: a c -> a a\n").unwrap();
    assert_eq!(bcp(dir.path(), &["validate", "bad.bcp"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_a_trace_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcp(dir.path(), &["simulate", &corpus("power2.bcp"), "--input", "4", "--seed", "7", "--trace", "t.trace"]);
    assert_eq!(o.status.code(), Some(0));
    let summary = stdout(&o);
    assert!(summary.starts_with(r#"{"input":[4],"seed":7,"verdict":"terminal","value":1,"#), "{summary}");
    let trace = std::fs::read_to_string(dir.path().join("t.trace")).unwrap();
    assert!(trace.starts_with("0 init x:4\n1 "));
    let steps: u64 = summary.split(r#""steps_taken":"#).nth(1).unwrap().trim_end_matches(['}', '\n']).parse().unwrap();
    assert_eq!(trace.lines().count() as u64, steps + 1);
    let multi = bcp(dir.path(), &["simulate", &corpus("power2.bcp"), "--inputs", "2..3", "--runs", "3"]);
    assert_eq!(stdout(&multi).lines().count(), 6);
    let conflict = bcp(dir.path(), &["simulate", &corpus("power2.bcp"), "--inputs", "2..3", "--trace", "x"]);
    assert_eq!(conflict.status.code(), Some(2));
}

#[test]
fn cm_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let geq = corpus("cm-geq.cm");
    let run = bcp(dir.path(), &["cm", "run", &geq, "--inputs", "(1,2)..(2,2)"]);
    assert_eq!(
        stdout(&run),
        "{\"input\":[1,2],\"outcome\":\"reject\",\"nodes\":5}\n{\"input\":[2,2],\"outcome\":\"accept\",\"nodes\":6}\n"
    );
    assert_eq!(
        bcp(dir.path(), &["cm", "check", &geq, "--builtin", "geq", "--inputs", "sum<=6"]).status.code(),
        Some(0)
    );
    assert_eq!(bcp(dir.path(), &["cm", "check", &geq, "--builtin", "lt", "--inputs", "sum<=2"]).status.code(), Some(1));
    let lt = corpus("cm-lt.cm");
    assert_eq!(bcp(dir.path(), &["cm", "check", &geq, "--oracle", &lt, "--inputs", "sum<=2"]).status.code(), Some(1));
    assert_eq!(bcp(dir.path(), &["cm", "bound", &geq, "--inputs", "sum<=5"]).status.code(), Some(0));
    let dbl = corpus("cm-double-geq.cm");
    let o = bcp(dir.path(), &["cm", "bound", &dbl, "--class", "n", "--slack", "0", "--inputs", "sum<=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains(r#""violation":"#));
}

#[test]
fn bound_passes_write_machines() {
    let dir = tempfile::tempdir().unwrap();
    let geq = corpus("cm-geq.cm");
    assert_eq!(bcp(dir.path(), &["bound", "weaken", &geq, "-o", "weak.cm"]).status.code(), Some(0));
    assert_eq!(bcp(dir.path(), &["bound", "tighten", "weak.cm", "-o", "tight.cm"]).status.code(), Some(0));
    let weak = parse_machine(&std::fs::read_to_string(dir.path().join("weak.cm")).unwrap()).unwrap();
    let tight = parse_machine(&std::fs::read_to_string(dir.path().join("tight.cm")).unwrap()).unwrap();
    assert_eq!(weak.bound.unwrap().to_string(), "weak-n");
    assert_eq!(tight.bound.unwrap().to_string(), "n");
    assert_eq!(
        bcp(dir.path(), &["cm", "check", "tight.cm", "--builtin", "geq", "--inputs", "sum<=3"]).status.code(),
        Some(0)
    );
    let o = bcp(dir.path(), &["bound", "tighten", &corpus("cm-double-geq.cm")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compile_and_verify_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (geq, lt) = (corpus("cm-geq.cm"), corpus("cm-lt.cm"));
    let o = bcp(
        dir.path(),
        &["compile", &geq, "--neg", &lt, "-o", "geq.bcp", "--verify", "--builtin", "geq", "--inputs", "(0,0)..(3,3)"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 15);
    let p = parse_protocol(&std::fs::read_to_string(dir.path().join("geq.bcp")).unwrap()).unwrap();
    assert!(p.validate().is_empty());
    assert_eq!(p.alphabet, ["x1", "x2"]);
    // The written protocol verifies on its own.
    let v = bcp(dir.path(), &["verify", "geq.bcp", "--mode", "silent", "--builtin", "geq", "--inputs", "sum<=3"]);
    assert_eq!(v.status.code(), Some(0));
    // Without a negative machine the output semi-computes; the source
    // machine is the default oracle.
    let semi = bcp(dir.path(), &["compile", &geq, "--verify", "--inputs", "sum<=3"]);
    assert_eq!(semi.status.code(), Some(0), "{}", stderr(&semi));
    assert!(stdout(&semi).contains(r#""mode":"semi""#));
}

#[test]
fn transforms_write_a_convention_header() {
    let dir = tempfile::tempdir().unwrap();
    let p2 = corpus("power2.bcp");
    let o = bcp(dir.path(), &["transform", &p2, "--single-broadcaster", "-o", "sb.bcp"]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("sb.bcp")).unwrap();
    assert!(text.starts_with("# input convention: inputs unchanged; one extra leader agent\n"));
    assert!(parse_protocol(&text).unwrap().validate().is_empty());
    assert_eq!(
        bcp(dir.path(), &["verify", "sb.bcp", "--builtin", "power2", "--inputs", "2..5"]).status.code(),
        Some(0)
    );

    let ss = bcp(dir.path(), &["transform", &corpus("reset-demo.bcp"), "--single-signal", "--inputs", "2..3"]);
    assert_eq!(ss.status.code(), Some(0));
    assert!(stderr(&ss).contains("NotSilent"));
    let quiet = bcp(dir.path(), &["transform", &p2, "--single-signal", "--inputs", "2..4"]);
    assert!(!stderr(&quiet).contains("NotSilent"));

    let ll = bcp(dir.path(), &["transform", &p2, "--leaderless", "--symbol", "y"]);
    assert_eq!(ll.status.code(), Some(2));
    assert!(stderr(&ll).contains("no input symbol `y`"));
    assert_eq!(bcp(dir.path(), &["transform", &p2]).status.code(), Some(2));
}

#[test]
fn check_reset_reports_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    let o = bcp(dir.path(), &["check-reset", &corpus("power2.bcp"), "--inputs", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o);
    assert!(line.starts_with(r#"{"input":[4],"verdict":"fail","nodes":14,"transition":"#), "{line}");
    let ok = bcp(dir.path(), &["check-reset", &corpus("reset-demo.bcp"), "--inputs", "2..5"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn jobs_do_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "majority", "--builtin", "majority", "--inputs", "sum<=7"];
    let one = bcp(dir.path(), &[&["--jobs", "1"], &args[..]].concat());
    let four = bcp(dir.path(), &[&["--jobs", "4"], &args[..]].concat());
    assert_eq!(one.stdout, four.stdout);
}

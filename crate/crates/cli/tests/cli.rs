use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use limon_core::bench::{fit_exponent, spread, CSV_HEADER};
use limon_core::generators::gen_small_model_family;
use limon_core::history::{serialize_history, Format};

const H1: &str = "adt stack\npush 0 0 2\npush 1 1 3\npop 1 4 6\npop 0 5 7\n";

fn limon(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_limon"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn running_example_is_linearizable() {
    let dir = tempfile::tempdir().unwrap();
    let f = write(dir.path(), "h1.txt", H1);
    let out = limon(&["check", &f], None);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out).trim(), "linearizable");
}

#[test]
fn small_model_member_is_unlinearizable_with_json_witness() {
    let text = serialize_history(&gen_small_model_family(5), Format::Ops);
    let out = limon(&["check", "--verbose", "-"], Some(&text));
    assert_eq!(code(&out), 1);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["linearizable"], false);
    assert_eq!(json["witness"]["kind"], "residual");
}

#[test]
fn duplicate_timestamps_are_malformed() {
    let out = limon(&["check"], Some("adt stack\npush 0 0 2\npush 1 2 3\n"));
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("timestamp 2"));
}

#[test]
fn adt_override_changes_the_monitor() {
    // LIFO order: a stack accepts it, a queue does not.
    let text = "adt stack\npush 1 0 1\npush 2 2 3\npop 2 4 5\npop 1 6 7\n";
    assert_eq!(code(&limon(&["check"], Some(text))), 0);
    let out = limon(&["check", "--adt", "queue", "-v"], Some(text));
    assert_eq!(code(&out), 1);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["witness"]["kind"], "critical_pair");
}

#[test]
fn event_format_is_detected() {
    let text = "adt queue\ncall 0 enq 5 1\nret 0 2\ncall 1 deq 3\nret 1 4 5\n";
    assert_eq!(code(&limon(&["check"], Some(text))), 0);
    assert_eq!(code(&limon(&["check", "--format", "events"], Some(text))), 0);
}

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for p in [&a, &b] {
        let out = limon(&["gen", "--adt", "queue", "--ops", "40", "--seed", "9", "-o", p.to_str().unwrap()], None);
        assert_eq!(code(&out), 0);
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn generated_histories_pass_check() {
    for adt in ["stack", "queue", "set", "multiset"] {
        let out = limon(&["gen", "--adt", adt, "--ops", "60", "--format", "events"], None);
        assert_eq!(code(&out), 0);
        assert_eq!(code(&limon(&["check"], Some(&stdout(&out)))), 0, "{adt}");
    }
}

#[test]
fn recorded_treiber_stack_is_linearizable() {
    let out = limon(&["record", "--impl", "treiber", "--threads", "4", "--ops", "2000", "--seed", "3"], None);
    assert_eq!(code(&out), 0);
    assert_eq!(code(&limon(&["check"], Some(&stdout(&out)))), 0);
}

#[test]
fn oracle_agrees_and_respects_its_bound() {
    assert_eq!(code(&limon(&["oracle"], Some(H1))), 0);
    let fifo = "adt stack\npush 1 0 1\npush 2 2 3\npop 1 4 5\npop 2 6 7\n";
    assert_eq!(code(&limon(&["oracle"], Some(fifo))), 1);
    assert_eq!(code(&limon(&["oracle", "--max-ops", "3"], Some(fifo))), 3);
    assert_eq!(code(&limon(&["oracle", "--experimental-saturation"], Some(H1))), 0);
}

#[test]
fn stream_mode_stops_at_first_violation() {
    // The remove returns before any add was called; later garbage is never read.
    let text = "adt multiset\ncall 0 remove 1 1\nret 0 2 ok\nthis is not a record\n";
    let out = limon(&["check", "--stream", "-v"], Some(text));
    assert_eq!(code(&out), 1);
    let json: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(json["witness"]["reason"], "count-violation");

    let ok = "adt set\ncall 0 add 1 1\nret 0 2 ok\ncall 1 contains 1 3\nret 1 4 true\n";
    assert_eq!(code(&limon(&["check", "--stream"], Some(ok))), 0);
    let bad = "adt set\ncall 0 add 1 1\nret 0 2 ok\ncall 1 contains 1 3\nret 1 4 false\n";
    assert_eq!(code(&limon(&["check", "--stream"], Some(bad))), 1);
    assert_eq!(code(&limon(&["check", "--stream"], Some("adt stack\n"))), 2);
}

fn bench_rows(adt: &str) -> Vec<(f64, f64)> {
    let out = limon(&["bench", "--adt", adt, "--step", "100", "--max", "2000"], None);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 6);
            (f[1].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect()
}

#[test]
fn stack_bench_work_fits_quadratic_envelope() {
    let rows = bench_rows("stack");
    assert_eq!(rows.len(), 20);
    let e = fit_exponent(&rows);
    assert!((1.0..=2.2).contains(&e), "exponent {e}");
}

#[test]
fn queue_bench_work_fits_n_log_n() {
    let rows = bench_rows("queue");
    let s = spread(rows.iter().map(|&(n, w)| w / (n * n.ln())));
    assert!(s <= 2.0, "spread {s}");
}

#[test]
fn unreadable_input_is_malformed() {
    assert_eq!(code(&limon(&["check", "/definitely/not/here"], None)), 2);
}

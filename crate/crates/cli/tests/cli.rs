//! End-to-end runs of the `confx` binary against the shipped corpus.

use std::path::PathBuf;
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

fn confx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confx")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(name: &str) -> String {
    corpus(name).to_string_lossy().into_owned()
}

#[test]
fn detect_exit_codes() {
    assert_eq!(confx(&["detect", &path("benign_counter.mc")]).status.code(), Some(0));
    let o = confx(&["detect", &path("two_writer_race.mc")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("AssertionFailure"));
    assert_eq!(confx(&["detect", &path("nested_monitor.mc")]).status.code(), Some(1));
    assert_eq!(confx(&["detect", &path("missing.mc")]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mc");
    std::fs::write(&bad, "main() { x = ; }").unwrap();
    let o = confx(&["detect", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn random_detection_is_seeded() {
    let a = confx(&["--json", "detect", &path("two_writer_race.mc"), "--random", "50", "--seed", "3"]);
    let b = confx(&["--json", "detect", &path("two_writer_race.mc"), "--random", "50", "--seed", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn extract_report_counts() {
    let o = confx(&["--json", "extract", &path("account_withdraw.mc"), "--report"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let tokens: Vec<u64> = v["stages"].as_array().unwrap().iter().map(|s| s["tokens"].as_u64().unwrap()).collect();
    assert_eq!(tokens, [140, 137, 137, 119]);
    assert_eq!(v["stages"][3]["omitted"], serde_json::json!(["fee"]));
    let text = stdout(&confx(&["extract", &path("account_withdraw.mc"), "--stage", "p4"]));
    assert!(text.contains("/* method fee omitted: unrelated to concurrency bugs */"));
    assert!(!text.contains("//"));
}

#[test]
fn extract_writes_graph_and_marks() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("g.dot");
    let marks = dir.path().join("marks.json");
    let o = confx(&[
        "extract",
        &path("nested_monitor.mc"),
        "--emit-shbg",
        dot.to_str().unwrap(),
        "--emit-marks",
        marks.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(std::fs::read_to_string(&dot).unwrap().starts_with("digraph"));
    let m = std::fs::read_to_string(&marks).unwrap();
    assert!(m.contains("\"up\"") && !m.contains("formatStats"));
}

#[test]
fn classify_lists_patterns() {
    let o = confx(&["classify", &path("two_writer_race.mc")]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("AtomicityViolation"), "{text}");
    let o = confx(&["classify", &path("ab_ba_deadlock.mc")]);
    assert!(stdout(&o).contains("Deadlock"));
}

#[test]
fn fix_with_mock_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.json");
    let out = dir.path().join("fixed.mc");
    let o = confx(&[
        "fix",
        &path("account_withdraw.mc"),
        "--llm",
        "mock",
        "--transcript",
        transcript.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&transcript).unwrap()).unwrap();
    assert_eq!(t["iter"], 2);
    assert_eq!(t["outcome"]["kind"], "fixed");
    assert_eq!(t["history"].as_array().unwrap().len(), 2);
    // The repaired program is clean.
    assert_eq!(confx(&["detect", out.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn replay_failing_schedule() {
    let o = confx(&["--json", "detect", &path("two_writer_race.mc")]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let trace = &v["report"]["trace"];
    let schedule: Vec<String> =
        trace["schedule"].as_array().expect("schedule in trace").iter().map(|x| x.to_string()).collect();
    let o = confx(&["replay", &path("two_writer_race.mc"), "--schedule", &schedule.join(",")]);
    assert!(stdout(&o).contains("AssertionFailure"), "{}", stdout(&o));
    let dir = tempfile::tempdir().unwrap();
    let saved = dir.path().join("trace.json");
    std::fs::write(&saved, trace.to_string()).unwrap();
    let o = confx(&["replay", &path("two_writer_race.mc"), "--trace", saved.to_str().unwrap()]);
    assert!(stdout(&o).contains("AssertionFailure"), "{}", stdout(&o));
}

#[test]
fn bench_is_deterministic() {
    let run = || confx(&["--json", "bench", &path(""), "--llm", "mock"]);
    let (a, b) = (run(), run());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&confx(&["bench", &path(""), "--llm", "mock"]));
    assert!(text.contains("attempted: 11") && text.contains("fixed: 10"), "{text}");
}

#[test]
fn bench_on_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = confx(&["bench", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("CR: n/a"));
}

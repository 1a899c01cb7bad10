//! Corpus-wide checks: every manifest expectation, the golden repairs and
//! the benign programs.

mod common;

use common::{corpus, corpus_entry, CorpusEntry};
use confx_core::agent::{repair, MockClient, RepairConfig, RepairSession, SessionOutcome};
use confx_core::analysis::count_locks_added;
use confx_core::explorer::{enumerate, explore, ExploreOptions, Verdict};
use confx_core::lang::{parse, pretty};
use confx_core::patterns::{catalog, find_pattern, Access};

fn session(e: &CorpusEntry) -> RepairSession {
    let mut client = MockClient::from_file(&e.mock_path().expect("mock fixture")).unwrap();
    let cfg = RepairConfig {
        file_name: format!("{}.mc", e.name),
        expect_globals: serde_json::from_value(e.manifest["expect_globals"].clone()).unwrap(),
        ..RepairConfig::default()
    };
    repair(&e.program(), &mut client, &cfg).unwrap()
}

#[test]
fn corpus_is_complete() {
    let all = corpus();
    assert!(all.len() >= 14);
    for e in &all {
        assert!(e.manifest["expected_verdict"].is_string(), "{}", e.name);
        if e.is_buggy() {
            assert!(e.fixed_text().is_some(), "{} has no reference version", e.name);
            assert!(e.mock_path().is_some_and(|p| p.exists()), "{} has no mock", e.name);
        }
    }
}

#[test]
fn sessions_match_manifests() {
    for e in corpus().into_iter().filter(CorpusEntry::is_buggy) {
        let s = session(&e);
        let m = &e.manifest;
        let outcome = match &s.outcome {
            SessionOutcome::Fixed => "fixed",
            SessionOutcome::ExhaustedAttempts => "exhausted",
            SessionOutcome::Failed { .. } => "failed",
        };
        assert_eq!(outcome, m["expected_outcome"].as_str().unwrap(), "{}", e.name);
        assert_eq!(s.iter as u64, m["expected_iter"].as_u64().unwrap(), "{}", e.name);
        assert_eq!(s.history.len(), s.iter, "{}", e.name);
        if let Some(n) = m["expected_locks_added"].as_u64() {
            assert_eq!(s.locks_added, Some(n as usize), "{}", e.name);
        }
        assert_eq!(s.detected.to_string(), m["expected_verdict"].as_str().unwrap(), "{}", e.name);
    }
}

#[test]
fn accepted_patches_equal_reference_versions() {
    for e in corpus().into_iter().filter(CorpusEntry::is_buggy) {
        let s = session(&e);
        let Some(patched) = &s.patched_source else { continue };
        let got = pretty(&parse(patched).unwrap());
        let want = pretty(&parse(&e.fixed_text().unwrap()).unwrap());
        assert_eq!(got, want, "{}", e.name);
        let fixed = parse(&e.fixed_text().unwrap()).unwrap();
        assert_eq!(s.locks_added, Some(count_locks_added(&e.program(), &fixed)), "{}", e.name);
    }
}

#[test]
fn exhausted_session_keeps_every_answer() {
    let s = session(&corpus_entry("dining_three"));
    assert_eq!(s.outcome, SessionOutcome::ExhaustedAttempts);
    assert_eq!(s.history.len(), 5);
    assert!(s.patched_source.is_none());
    assert!(s.locks_added.is_none());
}

/// A pattern window in an execution does not imply a failure: benign
/// programs contain conflicting windows in passing runs.
#[test]
fn benign_windows_do_not_fail() {
    let mut windows = 0;
    for e in corpus().into_iter().filter(|e| !e.is_buggy()) {
        let p = e.program();
        assert_eq!(explore(&p, ExploreOptions::default()).verdict, Verdict::NoBugFound, "{}", e.name);
        enumerate(&p, ExploreOptions::default(), 100_000, |x| {
            assert_eq!(x.verdict, Verdict::NoBugFound);
            let accesses: Vec<Access> = x
                .events
                .iter()
                .filter_map(|ev| Some(Access::new(ev.thread, ev.kind.access()?, ev.loc.clone()?)))
                .collect();
            windows += catalog().iter().filter(|pat| find_pattern(pat, &accesses).is_some()).count();
        })
        .unwrap();
    }
    assert!(windows > 0);
}

//! Bounded interleaving explorer: runs MiniConc programs under chosen,
//! exhaustive or random schedules and reports assertion failures, runtime
//! faults and deadlocks.

pub mod compile;
pub mod machine;
pub mod report;
pub mod search;
pub mod trace;

use thiserror::Error;

pub use machine::{Fault, FaultKind, Value};
pub use report::{statement_text, BugReport};
pub use search::{
    enumerate, explore, replay, run_random, DetectionResult, Execution, ExploreOptions, GlobalStore, Stats,
    ThreadSnapshot, DEFAULT_DEPTH_BOUND, DEFAULT_RUNS,
};
pub use trace::{Trace, TraceEvent, TraceKind, Verdict};

/// Sequence of dynamic thread ids, one per scheduling step.
pub type Schedule = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExplorerError {
    #[error("schedule step {index} names thread {thread}, which is not runnable")]
    InvalidSchedule { index: usize, thread: usize },
    #[error("more than {limit} schedules")]
    TooManySchedules { limit: usize },
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::lang::parse;

    fn run(src: &str) -> DetectionResult {
        explore(&parse(src).unwrap(), ExploreOptions::default())
    }

    const RACE: &str = "shared int x = 0;
        w(){ x = x + 1; }
        main(){ spawn a = w(); spawn b = w(); join a; join b; assert(x == 2); }";

    #[test]
    fn assert_false_single_schedule() {
        let r = run("main(){ assert(false); }");
        assert_eq!(r.verdict, Verdict::AssertionFailure);
        assert_eq!(r.stats.schedules, 1);
        assert_eq!(r.fault.unwrap().kind, FaultKind::AssertionFailed);
    }

    #[test]
    fn empty_main() {
        let r = run("main(){ skip; }");
        assert_eq!(r.verdict, Verdict::NoBugFound);
        assert!(!r.stats.partial);
        let p = parse("main(){ skip; }").unwrap();
        assert_eq!(replay(&p, &[], ExploreOptions::default()).unwrap().verdict, Verdict::NoBugFound);
    }

    #[test]
    fn two_writer_race() {
        let r = run(RACE);
        assert_eq!(r.verdict, Verdict::AssertionFailure);
        let p = parse(RACE).unwrap();
        let mut finals = BTreeSet::new();
        enumerate(&p, ExploreOptions::default(), 10_000, |e| {
            finals.insert(e.final_globals[0].1);
        })
        .unwrap();
        assert_eq!(finals, BTreeSet::from([Value::Int(1), Value::Int(2)]));
    }

    #[test]
    fn failing_schedule_replays() {
        let p = parse(RACE).unwrap();
        let r = explore(&p, ExploreOptions::default());
        let again = replay(&p, r.failing_schedule.as_ref().unwrap(), ExploreOptions::default()).unwrap();
        assert_eq!(again.verdict, r.verdict);
        assert_eq!(again.trace, r.trace);
    }

    #[test]
    fn invalid_schedule() {
        let p = parse(RACE).unwrap();
        let err = replay(&p, &[5], ExploreOptions::default()).unwrap_err();
        assert_eq!(err, ExplorerError::InvalidSchedule { index: 0, thread: 5 });
    }

    #[test]
    fn locked_increment_is_clean() {
        let r = run("shared int x = 0; lock m;
            w(){ lock(m) { x = x + 1; } }
            main(){ spawn a = w(); spawn b = w(); join a; join b; assert(x == 2); }");
        assert_eq!(r.verdict, Verdict::NoBugFound);
        assert!(!r.stats.partial);
        assert_eq!(r.final_states.len(), 1);
    }

    #[test]
    fn ab_ba_deadlocks() {
        let r = run("lock a; lock b;
            f(){ lock(a) { lock(b) { skip; } } } g(){ lock(b) { lock(a) { skip; } } }
            main(){ spawn t = f(); spawn u = g(); join t; join u; }");
        assert_eq!(r.verdict, Verdict::Deadlock);
        assert_eq!(r.blocked().len(), 3);
    }

    #[test]
    fn reentrant_locks() {
        let r = run("lock m; shared int x = 0; main(){ lock(m) { lock(m) { x = 1; } } lock(m) { x = 2; } }");
        assert_eq!(r.verdict, Verdict::NoBugFound);
    }

    #[test]
    fn wait_releases_and_reacquires() {
        let src = "lock m; cond c on m; shared bool ready = false; shared int v = 0;
            consumer(){ lock(m) { while (!ready) bound 3 { wait(c); } v = v + 1; } }
            producer(){ lock(m) { ready = true; notify(c); } }
            main(){ spawn a = consumer(); spawn b = producer(); join a; join b; assert(v == 1); }";
        let r = run(src);
        assert_eq!(r.verdict, Verdict::NoBugFound, "{:?}", r.fault);
    }

    #[test]
    fn lost_notify_deadlocks() {
        let r = run("lock m; cond c on m;
            w(){ lock(m) { wait(c); } } n(){ lock(m) { notify(c); } }
            main(){ spawn a = w(); spawn b = n(); join a; join b; }");
        assert_eq!(r.verdict, Verdict::Deadlock);
        assert!(r.threads[1].status.starts_with("waiting"));
    }

    #[test]
    fn notify_all_wakes_everyone() {
        let src = "lock m; cond c on m; shared bool go = false;
            w(){ lock(m) { if (!go) { wait(c); } } }
            main(){ spawn a = w(); spawn b = w(); lock(m) { go = true; notifyAll(c); } join a; join b; }";
        assert_eq!(run(src).verdict, Verdict::NoBugFound);
        let one = src.replace("notifyAll", "notify");
        assert_eq!(run(&one).verdict, Verdict::Deadlock);
    }

    #[test]
    fn runtime_faults() {
        let r = run("shared int z = 0; main(){ let a = 1 / z; }");
        assert_eq!(r.fault.unwrap().kind, FaultKind::DivisionByZero);
        let r = run("lock m; cond c on m; main(){ notify(c); }");
        assert_eq!(r.fault.unwrap().kind, FaultKind::IllegalMonitorState);
        let r = run("shared bool b = true; w(){ skip; } main(){ if (b) { skip; } else { spawn t = w(); } join t; }");
        assert_eq!(r.fault.unwrap().kind, FaultKind::UnsetHandle);
    }

    #[test]
    fn loop_bound_caps_iterations() {
        let r = run("shared int x = 0; main(){ while (true) bound 4 { x = x + 1; } assert(x == 4); }");
        assert_eq!(r.verdict, Verdict::NoBugFound);
    }

    #[test]
    fn depth_bound_marks_partial() {
        let p = parse("shared int x = 0; main(){ while (true) bound 50 { x = x + 1; } }").unwrap();
        let r = explore(&p, ExploreOptions { depth_bound: 10 });
        assert!(r.stats.partial);
    }

    #[test]
    fn random_runs_are_reproducible() {
        let p = parse(RACE).unwrap();
        let a = run_random(&p, 100, 7, ExploreOptions::default());
        let b = run_random(&p, 100, 7, ExploreOptions::default());
        assert_eq!(a, b);
        let ok = parse("shared int x = 0; main(){ x = 1; }").unwrap();
        assert_eq!(run_random(&ok, 100, 3, ExploreOptions::default()).verdict, Verdict::NoBugFound);
        let bad = parse("main(){ assert(false); }").unwrap();
        let r = run_random(&bad, 100, 3, ExploreOptions::default());
        assert_eq!((r.verdict, r.stats.schedules), (Verdict::AssertionFailure, 1));
    }

    /// Exact failure probability of one uniformly scheduled run of RACE.
    /// Each worker reads then writes `x`; main only becomes runnable once a
    /// worker has finished, when the outcome is already fixed, so it can be
    /// left out.
    fn race_failure_probability(pc: [u8; 2], seen: [i64; 2], x: i64) -> f64 {
        let live: Vec<usize> = (0..2).filter(|&t| pc[t] < 2).collect();
        if live.is_empty() {
            return if x == 2 { 0.0 } else { 1.0 };
        }
        let share = 1.0 / live.len() as f64;
        live.iter()
            .map(|&t| {
                let (mut pc, mut seen, mut x) = (pc, seen, x);
                if pc[t] == 0 {
                    seen[t] = x;
                } else {
                    x = seen[t] + 1;
                }
                pc[t] += 1;
                share * race_failure_probability(pc, seen, x)
            })
            .sum()
    }

    #[test]
    fn random_failure_rate_matches_path_weights() {
        let expect = race_failure_probability([0, 0], [0, 0], 0);
        assert!((expect - 0.5).abs() < 1e-12);
        let p = parse(RACE).unwrap();
        // Interleaving counting gives a different number: 4 of the 6
        // read/write orders lose an update.
        let mut counts = (0usize, 0usize);
        enumerate(&p, ExploreOptions::default(), 10_000, |e| {
            counts.0 += e.verdict.is_failure() as usize;
            counts.1 += 1;
        })
        .unwrap();
        assert!(counts.0 > 0 && counts.0 < counts.1);
        let n = 4000;
        let failures = (0..n)
            .filter(|&seed| run_random(&p, 1, seed, ExploreOptions::default()).verdict.is_failure())
            .count();
        let rate = failures as f64 / n as f64;
        // Five standard deviations of a binomial proportion at p = 0.5.
        assert!((rate - expect).abs() < 0.04, "rate {rate}, expected {expect}");
        assert!((rate - 4.0 / 6.0).abs() > 0.1);
    }

    #[test]
    fn thread_chains_match_static_ids() {
        let p = parse("shared int x = 0; w(){ x = 1; } s(){ spawn t = w(); join t; } main(){ s(); }").unwrap();
        let r = explore(&p, ExploreOptions::default());
        let chain: Vec<String> = r.thread_chains[1].iter().map(|s| s.to_string()).collect();
        assert_eq!(chain, vec!["main#1", "s#1"]);
    }

    #[test]
    fn trace_json_round_trip() {
        let r = run(RACE);
        let text = r.trace.to_json();
        assert!(text.contains("\"verdict\": \"AssertionFailure\""));
        assert_eq!(Trace::from_json(&text).unwrap(), r.trace);
    }

    #[test]
    fn bug_report_text() {
        let p = parse(RACE).unwrap();
        let r = explore(&p, ExploreOptions::default());
        let rep = BugReport::from_result(&p, &r).unwrap();
        assert!(rep.symptom.contains("assert(x == 2);"), "{}", rep.symptom);
        assert_eq!(rep.line, Some(3));
        assert!(rep.render(&p).starts_with("Verdict: AssertionFailure"));
    }
}

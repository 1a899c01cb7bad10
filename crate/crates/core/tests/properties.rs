//! Randomized invariants over generated MiniConc programs.

mod common;

use std::collections::BTreeSet;

use common::{check_hb_against_executions, gen_program, gen_small_program, shape};
use confx_core::analysis::{close_over_callers, is_conflicting, mark_methods, MarkReason};
use confx_core::explorer::{explore, replay, run_random, ExploreOptions};
use confx_core::extractor::{extract_all, stage_tokens, FilterStage};
use confx_core::graphs::{build_call_graph, build_shbg, AccessOp, GraphError, HbRelation};
use confx_core::lang::{count_tokens, parse, pretty, strip_comments, token_stats, MethodId};
use confx_core::patterns::{match_window, Access, TraceWindow};
use proptest::prelude::*;

/// `cases` unless PROPTEST_CASES overrides it.
fn config(cases: u32) -> ProptestConfig {
    let mut c = ProptestConfig::default();
    if std::env::var_os("PROPTEST_CASES").is_none() {
        c.cases = cases;
    }
    c
}

proptest! {
    #![proptest_config(config(96))]

    #[test]
    fn generated_programs_parse(g in gen_program()) {
        let text = g.render();
        prop_assert!(parse(&text).is_ok(), "{}\n{:?}", text, parse(&text).err());
    }

    #[test]
    fn pretty_printing_round_trips(g in gen_program()) {
        let p = parse(&g.render()).unwrap();
        let printed = pretty(&p);
        let q = parse(&printed).unwrap();
        prop_assert_eq!(shape(&p), shape(&q));
        prop_assert_eq!(pretty(&q), printed);
    }

    #[test]
    fn comment_stripping(g in gen_program()) {
        let text = g.render();
        let once = strip_comments(&text).unwrap();
        prop_assert_eq!(strip_comments(&once).unwrap(), once.clone());
        prop_assert_eq!(shape(&parse(&once).unwrap()), shape(&parse(&text).unwrap()));
        prop_assert_eq!(count_tokens(&once).unwrap(), count_tokens(&text).unwrap());
        let before = token_stats(&text).unwrap();
        prop_assert_eq!(token_stats(&once).unwrap().comments, 0);
        prop_assert_eq!(stage_tokens(&once).unwrap(), stage_tokens(&text).unwrap() - before.comments);
    }

    #[test]
    fn hb_relation_laws(g in gen_program()) {
        let p = parse(&g.render()).unwrap();
        let graph = build_shbg(&p, &build_call_graph(&p)).unwrap();
        let n = graph.len();
        let rel: Vec<Vec<Option<HbRelation>>> = (0..n)
            .map(|i| (0..n).map(|j| (i != j).then(|| graph.classify_indices(i, j))).collect())
            .collect();
        for i in 0..n {
            let e = &graph.events()[i];
            prop_assert_eq!(graph.hb_classify(e, e), Err(GraphError::SameEvent(e.clone())));
            for j in (0..n).filter(|&j| j != i) {
                let (a, b) = (rel[i][j].unwrap(), rel[j][i].unwrap());
                let mirrored = match a {
                    HbRelation::Before => HbRelation::After,
                    HbRelation::After => HbRelation::Before,
                    HbRelation::Parallel => HbRelation::Parallel,
                };
                prop_assert_eq!(b, mirrored, "{} vs {}", e, graph.events()[j]);
                prop_assert_eq!(graph.hb_classify(e, &graph.events()[j]).unwrap(), a);
                if a != HbRelation::Before {
                    continue;
                }
                for k in (0..n).filter(|&k| k != i && k != j) {
                    if rel[j][k] == Some(HbRelation::Before) {
                        prop_assert_eq!(rel[i][k], Some(HbRelation::Before));
                    }
                }
            }
        }
    }

    #[test]
    fn lock_wrappers_do_not_change_hb(g in gen_program()) {
        let locked = parse(&g.render()).unwrap();
        let bare = parse(&g.render_unlocked()).unwrap();
        let gl = build_shbg(&locked, &build_call_graph(&locked)).unwrap();
        let gb = build_shbg(&bare, &build_call_graph(&bare)).unwrap();
        prop_assert_eq!(gl.len(), gb.len());
        for (a, b) in gl.events().iter().zip(gb.events()) {
            prop_assert_eq!((&a.thread.entry, a.op, &a.location), (&b.thread.entry, b.op, &b.location));
        }
        for i in 0..gl.len() {
            for j in (0..gl.len()).filter(|&j| j != i) {
                prop_assert_eq!(gl.classify_indices(i, j), gb.classify_indices(i, j));
            }
        }
    }

    #[test]
    fn conflicts_are_symmetric(g in gen_program()) {
        let p = parse(&g.render()).unwrap();
        let graph = build_shbg(&p, &build_call_graph(&p)).unwrap();
        for a in graph.events() {
            for b in graph.events() {
                prop_assert_eq!(is_conflicting(a, b), is_conflicting(b, a));
                if is_conflicting(a, b) {
                    prop_assert!(a.location == b.location);
                    prop_assert!(a.op == AccessOp::Write || b.op == AccessOp::Write);
                }
            }
        }
    }

    #[test]
    fn marks_are_closed_under_callers(g in gen_program()) {
        let p = parse(&g.render()).unwrap();
        let cg = build_call_graph(&p);
        let marks = mark_methods(&p).unwrap();
        let mut again = marks.clone();
        close_over_callers(&cg, &mut again);
        prop_assert_eq!(&again, &marks);
        for m in &marks.methods {
            for caller in cg.callers(m).into_iter().filter(|c| cg.is_reachable(c)) {
                prop_assert!(marks.contains(&caller), "{} calls marked {}", caller, m);
            }
        }
        // Unreachable code never shows up in the marked set.
        for i in 0..g.dead {
            let dead = MethodId::new(format!("dead{i}"));
            prop_assert!(!marks.contains(&dead));
        }
    }

    #[test]
    fn adding_a_statement_keeps_bug_relevant_methods(
        g in gen_program(),
        extra in common::gen_stmt(),
        worker in 0..4usize,
    ) {
        let before = mark_methods(&parse(&g.render()).unwrap()).unwrap();
        let mut h = g.clone();
        let w = worker % h.workers.len();
        h.workers[w].push(extra);
        let after = mark_methods(&parse(&h.render()).unwrap()).unwrap();
        let relevant = |m: &confx_core::analysis::MarkedMethodSet| -> BTreeSet<MethodId> {
            m.provenance
                .iter()
                .filter(|(_, r)| r.contains(&MarkReason::BugRelevant))
                .map(|(k, _)| k.clone())
                .collect()
        };
        prop_assert!(relevant(&before).is_subset(&relevant(&after)));
    }

    #[test]
    fn extraction_invariants(g in gen_program()) {
        let p = parse(&g.render()).unwrap();
        let marks = mark_methods(&p).unwrap();
        let all = extract_all(&p).unwrap();
        let counts: Vec<usize> = all.iter().map(|f| f.token_count).collect();
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{:?}", counts);
        for f in &all {
            let q = parse(&f.text).unwrap();
            prop_assert_eq!(q.methods.len(), p.methods.len());
            for o in &f.omitted {
                prop_assert!(!marks.contains(&o.method), "{} marked but omitted at {}", o.method, f.stage);
                let signature = format!("{}(", o.method);
                prop_assert!(f.text.contains(&signature));
                prop_assert!(q.method(&o.method).unwrap().body.is_empty());
            }
        }
        prop_assert_eq!(all[3].stage, FilterStage::ShbFiltered);
    }

    #[test]
    fn locking_more_never_hides_a_method(g in gen_program()) {
        let bare = parse(&g.render_unlocked()).unwrap();
        let locked = parse(&g.render()).unwrap();
        let kept_bare = extract_all(&bare).unwrap().pop().unwrap().omitted_methods();
        let kept_locked = extract_all(&locked).unwrap().pop().unwrap().omitted_methods();
        // Omitted with locks implies omitted without them.
        prop_assert!(kept_locked.is_subset(&kept_bare), "{:?} vs {:?}", kept_locked, kept_bare);
    }

    #[test]
    fn window_matches_have_conflicting_partners(
        window in prop::collection::vec((0..3usize, any::<bool>(), 0..3usize), 2..5)
    ) {
        let events: Vec<Access> = window
            .iter()
            .map(|&(t, w, l)| Access::new(t, if w { AccessOp::Write } else { AccessOp::Read }, ["x", "y", "z"][l]))
            .collect();
        let w = TraceWindow { events: events.clone() };
        if !match_window(&w).is_empty() {
            for a in &events {
                prop_assert!(events.iter().any(|b| a.loc == b.loc
                    && a.thread != b.thread
                    && (a.op == AccessOp::Write || b.op == AccessOp::Write)));
            }
        }
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn static_hb_is_sound_for_explored_schedules(g in gen_small_program()) {
        let p = parse(&g.render()).unwrap();
        let graph = build_shbg(&p, &build_call_graph(&p)).unwrap();
        let (runs, violations) = check_hb_against_executions(&p, &graph, 200_000);
        prop_assert!(runs > 0);
        prop_assert!(violations.is_empty(), "{:?}\n{}", violations, g.render());
    }

    #[test]
    fn failures_replay_and_random_runs_agree(g in gen_small_program(), seed in any::<u64>()) {
        let p = parse(&g.render()).unwrap();
        let opts = ExploreOptions::default();
        let full = explore(&p, opts);
        prop_assert!(!full.stats.partial);
        if let Some(schedule) = &full.failing_schedule {
            let again = replay(&p, schedule, opts).unwrap();
            prop_assert_eq!(again.verdict, full.verdict);
        }
        let random = run_random(&p, 20, seed, opts);
        if random.verdict.is_failure() {
            prop_assert!(full.verdict.is_failure());
            let again = replay(&p, random.failing_schedule.as_ref().unwrap(), opts).unwrap();
            prop_assert_eq!(again.verdict, random.verdict);
        } else {
            prop_assert!(random.final_states.is_subset(&full.final_states) || full.verdict.is_failure());
        }
    }
}

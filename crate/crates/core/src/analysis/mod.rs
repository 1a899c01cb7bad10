//! Conflicting events, bug- and semantics-relevance, and the marking of
//! methods that must survive context extraction.

pub mod deadlock;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

pub use deadlock::{detect_deadlocks, DeadlockCandidate, DeadlockKind};

use crate::graphs::{
    build_call_graph, build_shbg, AccessOp, CallGraph, Event, GraphError, StaticHappensBeforeGraph,
};
use crate::lang::{walk_stmts, MethodId, Program, StmtKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum MarkReason {
    BugRelevant,
    SemanticsRelevant,
    DeadlockRelevant,
    ClosureAncestor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MarkedMethodSet {
    pub methods: BTreeSet<MethodId>,
    pub provenance: BTreeMap<MethodId, BTreeSet<MarkReason>>,
}

impl MarkedMethodSet {
    pub fn contains(&self, m: &MethodId) -> bool {
        self.methods.contains(m)
    }

    fn add(&mut self, m: &MethodId, reason: MarkReason) {
        self.methods.insert(m.clone());
        self.provenance.entry(m.clone()).or_default().insert(reason);
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("marks serialize")
    }
}

/// Two events conflict when they touch the same location from different
/// threads (or from two instances of one thread) and at least one writes.
pub fn is_conflicting(e1: &Event, e2: &Event) -> bool {
    e1.location == e2.location
        && (e1.thread != e2.thread || e1.thread.may_have_multiple_instances)
        && (e1.op == AccessOp::Write || e2.op == AccessOp::Write)
}

fn events_by_location(g: &StaticHappensBeforeGraph) -> HashMap<&str, Vec<usize>> {
    let mut by_loc: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in g.events().iter().enumerate() {
        by_loc.entry(e.location.as_str()).or_default().push(i);
    }
    by_loc
}

fn has_racing_partner(g: &StaticHappensBeforeGraph, by_loc: &HashMap<&str, Vec<usize>>, i: usize) -> bool {
    let e = &g.events()[i];
    by_loc[e.location.as_str()]
        .iter()
        .any(|&j| is_conflicting(e, &g.events()[j]) && g.may_run_in_parallel(i, j))
}

/// Every event with a conflicting partner it may run in parallel with.
pub fn bug_relevant_events(g: &StaticHappensBeforeGraph) -> BTreeSet<Event> {
    let by_loc = events_by_location(g);
    (0..g.len()).filter(|&i| has_racing_partner(g, &by_loc, i)).map(|i| g.events()[i].clone()).collect()
}

/// Methods containing at least one bug-relevant event. Stops examining a
/// method as soon as one of its events qualifies.
pub fn bug_relevant_methods(g: &StaticHappensBeforeGraph) -> BTreeSet<MethodId> {
    let by_loc = events_by_location(g);
    let mut by_method: BTreeMap<&MethodId, Vec<usize>> = BTreeMap::new();
    for (i, e) in g.events().iter().enumerate() {
        by_method.entry(&e.statement.method).or_default().push(i);
    }
    by_method
        .into_iter()
        .filter(|(_, events)| events.iter().any(|&i| has_racing_partner(g, &by_loc, i)))
        .map(|(m, _)| m.clone())
        .collect()
}

/// Methods that create or wait for threads.
pub fn semantics_relevant_methods(p: &Program) -> BTreeSet<MethodId> {
    p.methods
        .iter()
        .filter(|(_, m)| {
            let mut found = false;
            walk_stmts(&m.body, &mut |s| {
                found |= matches!(s.kind, StmtKind::Spawn { .. } | StmtKind::Join { .. });
            });
            found
        })
        .map(|(id, _)| id.clone())
        .collect()
}

pub fn mark_methods(p: &Program) -> Result<MarkedMethodSet, GraphError> {
    let cg = build_call_graph(p);
    let g = build_shbg(p, &cg)?;
    Ok(mark_methods_with(p, &cg, &g))
}

/// Marking over a prebuilt call graph and SHBG.
pub fn mark_methods_with(p: &Program, cg: &CallGraph, g: &StaticHappensBeforeGraph) -> MarkedMethodSet {
    let mut marks = MarkedMethodSet::default();
    for d in detect_deadlocks(g, p) {
        for m in &d.methods {
            marks.add(m, MarkReason::DeadlockRelevant);
        }
    }
    for m in semantics_relevant_methods(p) {
        if cg.is_reachable(&m) {
            marks.add(&m, MarkReason::SemanticsRelevant);
        }
    }
    for m in bug_relevant_methods(g) {
        marks.add(&m, MarkReason::BugRelevant);
    }
    close_over_callers(cg, &mut marks);
    marks
}

/// Adds every transitive caller (through calls and spawns) of a marked
/// method. Callers unreachable from the entry point are skipped; they never
/// run.
pub fn close_over_callers(cg: &CallGraph, marks: &mut MarkedMethodSet) {
    let callers = cg.caller_map();
    let mut queue: VecDeque<MethodId> = marks.methods.iter().cloned().collect();
    while let Some(m) = queue.pop_front() {
        for c in callers.get(&m).map(Vec::as_slice).unwrap_or(&[]) {
            if !marks.methods.contains(c) && cg.is_reachable(c) {
                marks.add(c, MarkReason::ClosureAncestor);
                queue.push_back(c.clone());
            }
        }
    }
}

/// Lock blocks added by a patch; removals do not go negative.
pub fn count_locks_added(original: &Program, patched: &Program) -> usize {
    patched.lock_count().saturating_sub(original.lock_count())
}

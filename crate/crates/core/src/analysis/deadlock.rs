//! Static deadlock candidates: lock-order cycles between overlapping threads,
//! and waits that cannot be woken (nested monitors, missing notifiers).

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graphs::{StaticHappensBeforeGraph, SyncKind, SyncSite};
use crate::lang::{MethodId, Program, StatementId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum DeadlockKind {
    Resource,
    Communication,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeadlockCandidate {
    pub kind: DeadlockKind,
    pub sites: Vec<StatementId>,
    pub methods: BTreeSet<MethodId>,
    pub locks: Vec<String>,
    pub description: String,
}

/// Lock-order edge `outer -> inner` observed in one static thread.
#[derive(Debug, Clone)]
struct OrderEdge {
    thread: usize,
    outer_site: StatementId,
    inner_site: StatementId,
}

pub fn detect_deadlocks(g: &StaticHappensBeforeGraph, _p: &Program) -> Vec<DeadlockCandidate> {
    let mut out = resource_candidates(g);
    out.extend(communication_candidates(g));
    let mut seen = BTreeSet::new();
    out.retain(|c| seen.insert((c.kind, c.sites.clone())));
    out
}

fn resource_candidates(g: &StaticHappensBeforeGraph) -> Vec<DeadlockCandidate> {
    let mut order: BTreeMap<(String, String), Vec<OrderEdge>> = BTreeMap::new();
    for site in g.sync_sites() {
        let SyncKind::Acquire { lock, reentrant: false } = &site.kind else { continue };
        for h in &site.held {
            if &h.lock != lock {
                order.entry((h.lock.clone(), lock.clone())).or_default().push(OrderEdge {
                    thread: site.thread,
                    outer_site: h.site.clone(),
                    inner_site: site.statement.clone(),
                });
            }
        }
    }
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in order.keys() {
        adj.entry(a.as_str()).or_default().push(b.as_str());
    }

    let mut out = Vec::new();
    for cycle in simple_cycles(&adj) {
        let steps: Vec<&Vec<OrderEdge>> = (0..cycle.len())
            .map(|i| &order[&(cycle[i].to_string(), cycle[(i + 1) % cycle.len()].to_string())])
            .collect();
        let mut chosen = Vec::new();
        if assign(g, &steps, &mut chosen) {
            let mut sites = Vec::new();
            for e in &chosen {
                for s in [&e.outer_site, &e.inner_site] {
                    if !sites.contains(s) {
                        sites.push(s.clone());
                    }
                }
            }
            let methods = sites.iter().map(|s| s.method.clone()).collect();
            let locks: Vec<String> = cycle.iter().map(|s| s.to_string()).collect();
            out.push(DeadlockCandidate {
                kind: DeadlockKind::Resource,
                description: format!("lock-order cycle {}", locks.join(" -> ")),
                sites,
                methods,
                locks,
            });
        }
    }
    out
}

/// Picks one edge per cycle step so that the chosen threads can all run at
/// once: pairwise distinct (or one thread with several instances) and
/// pairwise overlapping.
fn assign<'a>(g: &StaticHappensBeforeGraph, steps: &[&'a Vec<OrderEdge>], chosen: &mut Vec<&'a OrderEdge>) -> bool {
    let Some((first, rest)) = steps.split_first() else { return true };
    for e in first.iter() {
        let ok = chosen.iter().all(|c| {
            if c.thread == e.thread {
                g.threads()[e.thread].id.may_have_multiple_instances
            } else {
                g.threads_may_overlap(c.thread, e.thread)
            }
        });
        if ok {
            chosen.push(e);
            if assign(g, rest, chosen) {
                return true;
            }
            chosen.pop();
        }
    }
    false
}

/// Elementary cycles of a small directed graph, each rotated so that its
/// smallest node comes first.
fn simple_cycles<'a>(adj: &BTreeMap<&'a str, Vec<&'a str>>) -> Vec<Vec<&'a str>> {
    fn dfs<'a>(
        start: &'a str,
        node: &'a str,
        adj: &BTreeMap<&'a str, Vec<&'a str>>,
        path: &mut Vec<&'a str>,
        out: &mut Vec<Vec<&'a str>>,
    ) {
        for &next in adj.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            if next == start {
                out.push(path.clone());
            } else if next > start && !path.contains(&next) {
                path.push(next);
                dfs(start, next, adj, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    for &start in adj.keys() {
        dfs(start, start, adj, &mut vec![start], &mut out);
    }
    out
}

fn communication_candidates(g: &StaticHappensBeforeGraph) -> Vec<DeadlockCandidate> {
    let mut out = Vec::new();
    for w in g.sync_sites() {
        let SyncKind::Wait { cond, monitor } = &w.kind else { continue };
        let notifiers: Vec<&SyncSite> = g
            .sync_sites()
            .iter()
            .filter(|n| matches!(&n.kind, SyncKind::Notify { cond: c, .. } if c == cond))
            .filter(|n| g.threads_may_overlap(w.thread, n.thread))
            .collect();
        if notifiers.is_empty() {
            out.push(DeadlockCandidate {
                kind: DeadlockKind::Communication,
                sites: vec![w.statement.clone()],
                methods: BTreeSet::from([w.statement.method.clone()]),
                locks: Vec::new(),
                description: format!("wait on `{cond}` has no notifier in a concurrent thread"),
            });
            continue;
        }
        for outer in w.held.iter().filter(|h| &h.lock != monitor) {
            if notifiers.iter().all(|n| n.held.iter().any(|h| h.lock == outer.lock)) {
                let mut methods: BTreeSet<MethodId> = BTreeSet::from([w.statement.method.clone()]);
                methods.extend(notifiers.iter().map(|n| n.statement.method.clone()));
                out.push(DeadlockCandidate {
                    kind: DeadlockKind::Communication,
                    sites: vec![w.statement.clone(), outer.site.clone()],
                    methods,
                    locks: vec![outer.lock.clone()],
                    description: format!(
                        "wait on `{cond}` keeps `{}` locked, and every notifier needs `{}`",
                        outer.lock, outer.lock
                    ),
                });
                break;
            }
        }
    }
    out
}

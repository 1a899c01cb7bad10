use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::lang::{walk_stmts, MethodId, Program, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<MethodId>,
    /// Caller → callee pairs from both `call` and `spawn` statements.
    pub edges: BTreeSet<(MethodId, MethodId)>,
    /// The subset of `edges` contributed by `spawn`.
    pub spawn_edges: BTreeSet<(MethodId, MethodId)>,
    pub roots: BTreeSet<MethodId>,
    pub unreachable: BTreeSet<MethodId>,
}

impl CallGraph {
    pub fn callers(&self, m: &MethodId) -> BTreeSet<MethodId> {
        self.edges.iter().filter(|(_, callee)| callee == m).map(|(caller, _)| caller.clone()).collect()
    }

    pub fn callees(&self, m: &MethodId) -> BTreeSet<MethodId> {
        self.edges.iter().filter(|(caller, _)| caller == m).map(|(_, callee)| callee.clone()).collect()
    }

    pub fn is_reachable(&self, m: &MethodId) -> bool {
        self.nodes.contains(m) && !self.unreachable.contains(m)
    }

    /// Reverse adjacency, for upward (caller) traversals.
    pub fn caller_map(&self) -> BTreeMap<MethodId, Vec<MethodId>> {
        let mut map: BTreeMap<MethodId, Vec<MethodId>> = BTreeMap::new();
        for (caller, callee) in &self.edges {
            map.entry(callee.clone()).or_default().push(caller.clone());
        }
        map
    }
}

pub fn build_call_graph(p: &Program) -> CallGraph {
    let mut edges = BTreeSet::new();
    let mut spawn_edges = BTreeSet::new();
    for (id, m) in &p.methods {
        walk_stmts(&m.body, &mut |s| match &s.kind {
            StmtKind::Call { method, .. } => {
                edges.insert((id.clone(), method.clone()));
            }
            StmtKind::Spawn { method, .. } => {
                edges.insert((id.clone(), method.clone()));
                spawn_edges.insert((id.clone(), method.clone()));
            }
            _ => {}
        });
    }
    let nodes: BTreeSet<MethodId> = p.methods.keys().cloned().collect();

    let mut reached = BTreeSet::new();
    let mut queue = VecDeque::from([p.entry.clone()]);
    while let Some(m) = queue.pop_front() {
        if !reached.insert(m.clone()) {
            continue;
        }
        for (caller, callee) in &edges {
            if *caller == m && !reached.contains(callee) {
                queue.push_back(callee.clone());
            }
        }
    }
    let mut roots: BTreeSet<MethodId> = BTreeSet::from([p.entry.clone()]);
    roots.extend(
        spawn_edges
            .iter()
            .filter(|(caller, _)| reached.contains(caller))
            .map(|(_, callee)| callee.clone()),
    );
    let unreachable = nodes.difference(&reached).cloned().collect();
    CallGraph { nodes, edges, spawn_edges, roots, unreachable }
}

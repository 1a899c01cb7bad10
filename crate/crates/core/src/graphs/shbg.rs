//! Static happens-before graph over shared-memory read/write events.
//!
//! Each static thread is a spawn site reached through a chain of spawn and
//! call sites from `main`. Calls are inlined per thread, so one statement may
//! produce events in several threads. Inside a thread, an event may occur more
//! than once (loop bodies, repeated calls); ordering edges are only added
//! when every occurrence of the source precedes every occurrence of the
//! target.
//!
//! Internally every thread also gets `Start` and `End` pseudo-nodes that carry
//! fork and join edges. The exported edge set is the projection of the
//! internal graph onto real events, so its transitive closure equals the
//! reachability index used for queries.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::callgraph::CallGraph;
use crate::lang::{MethodId, Program, StatementId, Stmt, StmtKind};

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("call inlining exceeded depth {limit} at {site}")]
    Recursion { limit: usize, site: StatementId },
    #[error("event not in graph: {0}")]
    UnknownEvent(Event),
    #[error("an event cannot be classified against itself: {0}")]
    SameEvent(Event),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AccessOp {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

impl fmt::Display for AccessOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessOp::Read => "R",
            AccessOp::Write => "W",
        })
    }
}

/// A static thread: the chain of spawn and call sites leading from `main` to
/// the spawn statement that creates it. `main` has the empty chain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StaticThreadId {
    pub chain: Vec<StatementId>,
    pub entry: MethodId,
    pub may_have_multiple_instances: bool,
}

impl StaticThreadId {
    pub fn main(entry: MethodId) -> Self {
        StaticThreadId { chain: Vec::new(), entry, may_have_multiple_instances: false }
    }
}

impl fmt::Display for StaticThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.chain.is_empty() {
            write!(f, "{}", self.entry)?;
        } else {
            let chain: Vec<String> = self.chain.iter().map(|s| s.to_string()).collect();
            write!(f, "{}:{}", chain.join("/"), self.entry)?;
        }
        if self.may_have_multiple_instances {
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl Serialize for StaticThreadId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Event {
    pub thread: StaticThreadId,
    #[serde(rename = "stmt")]
    pub statement: StatementId,
    pub op: AccessOp,
    #[serde(rename = "loc")]
    pub location: String,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}({}))", self.thread, self.statement, self.op, self.location)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HbRelation {
    Before,
    After,
    Parallel,
}

/// A lock held at a synchronization site, with the `lock` statement that
/// acquired it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HeldLock {
    pub lock: String,
    pub site: StatementId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SyncKind {
    Acquire { lock: String, reentrant: bool },
    Wait { cond: String, monitor: String },
    Notify { cond: String, all: bool },
}

/// A lock, wait or notify statement as executed by one static thread, with
/// the locks held at that point (outermost first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSite {
    pub thread: usize,
    pub statement: StatementId,
    pub kind: SyncKind,
    pub held: Vec<HeldLock>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadInfo {
    pub id: StaticThreadId,
    pub parent: Option<usize>,
    /// Number of spawns between `main` and this thread.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShbgOptions {
    pub max_depth: usize,
}

impl Default for ShbgOptions {
    fn default() -> Self {
        ShbgOptions { max_depth: DEFAULT_MAX_DEPTH }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(n: usize) -> Self {
        BitSet { words: vec![0; n.div_ceil(64)] }
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    fn union_with(&mut self, other: &BitSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
    }
}

#[derive(Debug, Clone)]
pub struct StaticHappensBeforeGraph {
    events: Vec<Event>,
    index: HashMap<Event, usize>,
    event_thread: Vec<usize>,
    threads: Vec<ThreadInfo>,
    sync_sites: Vec<SyncSite>,
    /// Internal nodes: events, spawn/join anchors, then a Start/End pair per
    /// thread.
    reach: Vec<BitSet>,
    succ: Vec<Vec<usize>>,
}

impl StaticHappensBeforeGraph {
    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn index_of(&self, e: &Event) -> Option<usize> {
        self.index.get(e).copied()
    }

    pub fn threads(&self) -> &[ThreadInfo] {
        &self.threads
    }

    pub fn thread_of(&self, event: usize) -> usize {
        self.event_thread[event]
    }

    pub fn sync_sites(&self) -> &[SyncSite] {
        &self.sync_sites
    }

    /// Edges between events (indices into `events()`), sorted. This is the
    /// internal graph with pseudo-nodes projected away, so its transitive
    /// closure equals the reachability index.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n_events = self.events.len();
        let n = self.succ.len();
        let mut edges = Vec::new();
        let mut seen = vec![usize::MAX; n];
        for v in 0..n_events {
            let mut stack: Vec<usize> = self.succ[v].clone();
            while let Some(u) = stack.pop() {
                if seen[u] == v {
                    continue;
                }
                seen[u] = v;
                if u < n_events {
                    edges.push((v, u));
                } else {
                    stack.extend(self.succ[u].iter().copied());
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    fn start(&self, thread: usize) -> usize {
        self.succ.len() - 2 * self.threads.len() + 2 * thread
    }

    fn end(&self, thread: usize) -> usize {
        self.start(thread) + 1
    }

    /// Path query between two event indices.
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        self.reach[a].contains(b)
    }

    pub fn classify_indices(&self, a: usize, b: usize) -> HbRelation {
        if self.reach[a].contains(b) {
            HbRelation::Before
        } else if self.reach[b].contains(a) {
            HbRelation::After
        } else {
            HbRelation::Parallel
        }
    }

    pub fn hb_classify(&self, e1: &Event, e2: &Event) -> Result<HbRelation, GraphError> {
        let a = self.index_of(e1).ok_or_else(|| GraphError::UnknownEvent(e1.clone()))?;
        let b = self.index_of(e2).ok_or_else(|| GraphError::UnknownEvent(e2.clone()))?;
        if a == b {
            return Err(GraphError::SameEvent(e1.clone()));
        }
        Ok(self.classify_indices(a, b))
    }

    /// Whether instances of two static threads can be alive at the same time.
    /// A thread overlaps itself only when it may have several instances.
    pub fn threads_may_overlap(&self, t1: usize, t2: usize) -> bool {
        if t1 == t2 {
            return self.threads[t1].id.may_have_multiple_instances;
        }
        !(self.reach[self.end(t1)].contains(self.start(t2)) || self.reach[self.end(t2)].contains(self.start(t1)))
    }

    /// Whether two events may execute concurrently: different overlapping
    /// instances of the same thread, or HB-unordered events.
    pub fn may_run_in_parallel(&self, a: usize, b: usize) -> bool {
        let ta = self.event_thread[a];
        if ta == self.event_thread[b] && self.threads[ta].id.may_have_multiple_instances {
            return true;
        }
        a != b && self.classify_indices(a, b) == HbRelation::Parallel
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.events,
            "edges": self.edges().into_iter().map(|(a, b)| [a, b]).collect::<Vec<_>>(),
        })
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph shbg {\n  node [shape=box];\n");
        for (i, e) in self.events.iter().enumerate() {
            let label = format!("{}\\n{} {}({})", e.thread, e.statement, e.op, e.location);
            out.push_str(&format!("  n{i} [label=\"{}\"];\n", label.replace('"', "\\\"")));
        }
        for (a, b) in self.edges() {
            out.push_str(&format!("  n{a} -> n{b};\n"));
        }
        out.push_str("}\n");
        out
    }
}

/// One dynamic occurrence of a node in a thread's inlined walk.
#[derive(Debug, Clone)]
struct Occ {
    pos: u32,
    outer_loop: Option<u32>,
    /// Enclosing if-arms and loop bodies, outermost first.
    scopes: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum HandleDef {
    Thread(usize),
    Unknown,
}

type Handles = HashMap<String, BTreeSet<HandleDef>>;

struct ThreadRecord {
    spawns: Vec<(usize, Occ)>,
    joins: Vec<(BTreeSet<HandleDef>, Occ)>,
    nodes: Vec<usize>,
}

struct Builder<'p> {
    program: &'p Program,
    opts: ShbgOptions,
    events: Vec<Event>,
    index: HashMap<Event, usize>,
    event_thread: Vec<usize>,
    occs: Vec<Vec<Occ>>,
    threads: Vec<ThreadInfo>,
    sync_sites: Vec<SyncSite>,
    next_scope: u32,
}

struct Walk {
    thread: usize,
    pos: u32,
    scopes: Vec<u32>,
    loops: Vec<u32>,
    call_path: Vec<StatementId>,
    held: Vec<HeldLock>,
    frames: Vec<Handles>,
    record: ThreadRecord,
}

impl Walk {
    fn occ(&mut self) -> Occ {
        self.pos += 1;
        Occ { pos: self.pos, outer_loop: self.loops.first().copied(), scopes: self.scopes.clone() }
    }
}

impl<'p> Builder<'p> {
    fn event(&mut self, w: &mut Walk, s: &Stmt, op: AccessOp, loc: &str) {
        let e = Event {
            thread: self.threads[w.thread].id.clone(),
            statement: s.id.clone(),
            op,
            location: loc.to_string(),
        };
        let idx = match self.index.get(&e) {
            Some(&i) => i,
            None => {
                let i = self.events.len();
                self.index.insert(e.clone(), i);
                self.events.push(e);
                self.event_thread.push(w.thread);
                self.occs.push(Vec::new());
                w.record.nodes.push(i);
                i
            }
        };
        let occ = w.occ();
        self.occs[idx].push(occ);
    }

    fn accesses(&mut self, w: &mut Walk, s: &Stmt) {
        let (reads, write) = s.accesses();
        for r in reads {
            self.event(w, s, AccessOp::Read, &r);
        }
        if let Some(x) = write {
            self.event(w, s, AccessOp::Write, &x);
        }
    }

    fn sync(&mut self, w: &Walk, s: &Stmt, kind: SyncKind) {
        self.sync_sites.push(SyncSite { thread: w.thread, statement: s.id.clone(), kind, held: w.held.clone() });
    }

    fn new_scope(&mut self) -> u32 {
        self.next_scope += 1;
        self.next_scope
    }

    fn block(&mut self, w: &mut Walk, stmts: &[Stmt]) -> Result<(), GraphError> {
        for s in stmts {
            self.stmt(w, s)?;
        }
        Ok(())
    }

    fn stmt(&mut self, w: &mut Walk, s: &Stmt) -> Result<(), GraphError> {
        // The loop condition is re-evaluated each iteration, so its reads
        // belong to the loop.
        if !matches!(s.kind, StmtKind::While { .. }) {
            self.accesses(w, s);
        }
        match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                let before = w.frames.last().cloned().unwrap_or_default();
                let a = self.new_scope();
                w.scopes.push(a);
                self.block(w, then_branch)?;
                w.scopes.pop();
                let after_then = std::mem::replace(w.frames.last_mut().unwrap(), before);
                let b = self.new_scope();
                w.scopes.push(b);
                self.block(w, else_branch)?;
                w.scopes.pop();
                merge(w.frames.last_mut().unwrap(), after_then);
            }
            StmtKind::While { body, .. } => {
                let entry = w.frames.last().cloned().unwrap_or_default();
                let frame = w.frames.last_mut().unwrap();
                for h in spawned_handles(body) {
                    frame.entry(h).or_default().insert(HandleDef::Unknown);
                }
                let l = self.new_scope();
                w.scopes.push(l);
                w.loops.push(l);
                self.accesses(w, s);
                self.block(w, body)?;
                w.loops.pop();
                w.scopes.pop();
                merge(w.frames.last_mut().unwrap(), entry);
            }
            StmtKind::Lock { lock, body } => {
                let reentrant = w.held.iter().any(|h| &h.lock == lock);
                self.sync(w, s, SyncKind::Acquire { lock: lock.clone(), reentrant });
                w.held.push(HeldLock { lock: lock.clone(), site: s.id.clone() });
                self.block(w, body)?;
                w.held.pop();
            }
            StmtKind::Wait { cond } => {
                let monitor = self.program.cond(cond).map(|c| c.monitor.clone()).unwrap_or_default();
                self.sync(w, s, SyncKind::Wait { cond: cond.clone(), monitor });
            }
            StmtKind::Notify { cond } => self.sync(w, s, SyncKind::Notify { cond: cond.clone(), all: false }),
            StmtKind::NotifyAll { cond } => self.sync(w, s, SyncKind::Notify { cond: cond.clone(), all: true }),
            StmtKind::Spawn { handle, method, .. } => {
                let depth = self.threads[w.thread].depth + 1;
                if depth > self.opts.max_depth {
                    return Err(GraphError::Recursion { limit: self.opts.max_depth, site: s.id.clone() });
                }
                let parent = &self.threads[w.thread].id;
                let mut chain = parent.chain.clone();
                chain.extend(w.call_path.iter().cloned());
                chain.push(s.id.clone());
                let id = StaticThreadId {
                    chain,
                    entry: method.clone(),
                    may_have_multiple_instances: parent.may_have_multiple_instances || !w.loops.is_empty(),
                };
                let child = self.threads.len();
                self.threads.push(ThreadInfo { id, parent: Some(w.thread), depth });
                let occ = w.occ();
                w.record.spawns.push((child, occ));
                w.frames.last_mut().unwrap().insert(handle.clone(), BTreeSet::from([HandleDef::Thread(child)]));
            }
            StmtKind::Join { handle } => {
                let defs = w.frames.last().and_then(|f| f.get(handle)).cloned().unwrap_or_default();
                let occ = w.occ();
                w.record.joins.push((defs, occ));
            }
            StmtKind::Call { method, .. } => {
                if w.call_path.len() >= self.opts.max_depth {
                    return Err(GraphError::Recursion { limit: self.opts.max_depth, site: s.id.clone() });
                }
                let body = &self.program.methods[method].body;
                w.call_path.push(s.id.clone());
                w.frames.push(Handles::new());
                self.block(w, body)?;
                w.frames.pop();
                w.call_path.pop();
            }
            StmtKind::Let { .. } | StmtKind::Assign { .. } | StmtKind::Assert { .. } | StmtKind::Skip => {}
        }
        Ok(())
    }
}

fn merge(into: &mut Handles, other: Handles) {
    for (h, defs) in other {
        into.entry(h).or_default().extend(defs);
    }
}

/// Handles assigned by `spawn` anywhere in a block, without entering calls.
fn spawned_handles(stmts: &[Stmt]) -> Vec<String> {
    let mut out = Vec::new();
    crate::lang::walk_stmts(stmts, &mut |s| {
        if let StmtKind::Spawn { handle, .. } = &s.kind {
            out.push(handle.clone());
        }
    });
    out
}

fn loops_of(occs: &[Occ]) -> Vec<u32> {
    let mut v: Vec<u32> = occs.iter().filter_map(|o| o.outer_loop).collect();
    v.sort_unstable();
    v.dedup();
    v
}

struct NodeSummary {
    min_pos: u32,
    max_pos: u32,
    loops: Vec<u32>,
}

impl NodeSummary {
    fn of(occs: &[Occ]) -> Self {
        NodeSummary {
            min_pos: occs.iter().map(|o| o.pos).min().unwrap_or(0),
            max_pos: occs.iter().map(|o| o.pos).max().unwrap_or(0),
            loops: loops_of(occs),
        }
    }

    fn shares_loop(&self, other: &[u32]) -> bool {
        self.loops.iter().any(|l| other.binary_search(l).is_ok())
    }
}

pub fn build_shbg(p: &Program, cg: &CallGraph) -> Result<StaticHappensBeforeGraph, GraphError> {
    build_shbg_with(p, cg, ShbgOptions::default())
}

pub fn build_shbg_with(
    p: &Program,
    _cg: &CallGraph,
    opts: ShbgOptions,
) -> Result<StaticHappensBeforeGraph, GraphError> {
    let mut b = Builder {
        program: p,
        opts,
        events: Vec::new(),
        index: HashMap::new(),
        event_thread: Vec::new(),
        occs: Vec::new(),
        threads: vec![ThreadInfo { id: StaticThreadId::main(p.entry.clone()), parent: None, depth: 0 }],
        sync_sites: Vec::new(),
        next_scope: 0,
    };
    let mut records: Vec<ThreadRecord> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(t) = queue.pop_front() {
        let entry = b.threads[t].id.entry.clone();
        let mut w = Walk {
            thread: t,
            pos: 0,
            scopes: Vec::new(),
            loops: Vec::new(),
            call_path: Vec::new(),
            held: Vec::new(),
            frames: vec![Handles::new()],
            record: ThreadRecord { spawns: Vec::new(), joins: Vec::new(), nodes: Vec::new() },
        };
        b.block(&mut w, &p.methods[&entry].body)?;
        queue.extend(w.record.spawns.iter().map(|(child, _)| *child));
        debug_assert_eq!(records.len(), t);
        records.push(w.record);
    }

    // Spawn and join statements become anchor nodes after the events; they
    // carry fork and join edges even when the thread has no events nearby.
    let n_events = b.events.len();
    let mut occs = std::mem::take(&mut b.occs);
    let mut is_join = vec![false; n_events];
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(records.len());
    let mut forks = Vec::new();
    let mut joins = Vec::new();
    for (t, rec) in records.iter().enumerate() {
        let mut m = rec.nodes.clone();
        for (child, s) in &rec.spawns {
            m.push(occs.len());
            forks.push((t, occs.len(), *child));
            occs.push(vec![s.clone()]);
            is_join.push(false);
        }
        for (defs, j) in &rec.joins {
            m.push(occs.len());
            if let [HandleDef::Thread(c)] = defs.iter().collect::<Vec<_>>().as_slice() {
                if !b.threads[*c].id.may_have_multiple_instances {
                    joins.push((occs.len(), *c));
                }
            }
            occs.push(vec![j.clone()]);
            is_join.push(true);
        }
        members.push(m);
    }
    let base = occs.len();
    let n = base + 2 * b.threads.len();
    let start = |t: usize| base + 2 * t;
    let end = |t: usize| base + 2 * t + 1;
    let summaries: Vec<NodeSummary> = occs.iter().map(|o| NodeSummary::of(o)).collect();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];

    for (t, m) in members.iter().enumerate() {
        succ[start(t)].push(end(t));
        for &a in m {
            succ[start(t)].push(a);
            if is_join[a] {
                // A join only orders what it dominates: later code in the
                // same or an enclosed block.
                let j = &occs[a][0];
                if j.scopes.is_empty() {
                    succ[a].push(end(t));
                }
                for &c in m {
                    if c != a && occs[c].iter().all(|o| o.pos > j.pos && o.scopes.starts_with(&j.scopes)) {
                        succ[a].push(c);
                    }
                }
            } else {
                succ[a].push(end(t));
                let sa = &summaries[a];
                for &c in m {
                    if a != c && sa.max_pos < summaries[c].min_pos && !sa.shares_loop(&summaries[c].loops) {
                        succ[a].push(c);
                    }
                }
            }
        }
    }
    for (t, anchor, child) in forks {
        succ[start(t)].push(start(child));
        if !b.threads[t].id.may_have_multiple_instances {
            succ[anchor].push(start(child));
        }
    }
    for (anchor, child) in joins {
        succ[end(child)].push(anchor);
    }
    for s in &mut succ {
        s.sort_unstable();
        s.dedup();
    }

    // Kahn's algorithm, then closure in reverse topological order.
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &v in s {
            indeg[v] += 1;
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = ready.pop() {
        order.push(v);
        for &u in &succ[v] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(u);
            }
        }
    }
    assert_eq!(order.len(), n, "happens-before graph must be acyclic");
    let mut reach = vec![BitSet::new(n); n];
    for &v in order.iter().rev() {
        let mut r = BitSet::new(n);
        for &u in &succ[v] {
            r.insert(u);
            r.union_with(&reach[u]);
        }
        reach[v] = r;
    }

    Ok(StaticHappensBeforeGraph {
        events: b.events,
        index: b.index,
        event_thread: b.event_thread,
        threads: b.threads,
        sync_sites: b.sync_sites,
        reach,
        succ,
    })
}

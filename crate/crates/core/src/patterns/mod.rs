//! The 17 memory-access patterns behind non-deadlock concurrency bugs, and a
//! matcher over execution traces.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::explorer::{Trace, Verdict};
use crate::graphs::AccessOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ThreadSym {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum LocSym {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct TemplateEntry {
    pub thread: ThreadSym,
    pub op: AccessOp,
    pub loc: LocSym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Pattern {
    pub id: u8,
    pub template: Vec<TemplateEntry>,
}

impl Pattern {
    pub fn uses_both_locations(&self) -> bool {
        self.template.iter().any(|e| e.loc == LocSym::Y)
    }
}

const fn e(thread: ThreadSym, op: AccessOp, loc: LocSym) -> TemplateEntry {
    TemplateEntry { thread, op, loc }
}

use AccessOp::{Read as R, Write as W};
use LocSym::{X, Y};
use ThreadSym::{A, B};

const CATALOG: [&[TemplateEntry]; 17] = [
    &[e(A, R, X), e(B, W, X)],
    &[e(A, W, X), e(B, R, X)],
    &[e(A, W, X), e(B, W, X)],
    &[e(A, R, X), e(B, W, X), e(A, R, X)],
    &[e(A, W, X), e(B, W, X), e(A, R, X)],
    &[e(A, W, X), e(B, R, X), e(A, W, X)],
    &[e(A, R, X), e(B, W, X), e(A, W, X)],
    &[e(A, W, X), e(B, W, X), e(A, W, X)],
    &[e(A, W, X), e(B, W, X), e(B, W, Y), e(A, W, Y)],
    &[e(A, W, X), e(B, W, Y), e(B, W, X), e(A, W, Y)],
    &[e(A, W, X), e(B, W, Y), e(A, W, Y), e(B, W, X)],
    &[e(A, W, X), e(B, R, X), e(B, R, Y), e(A, W, Y)],
    &[e(A, W, X), e(B, R, Y), e(B, R, X), e(A, W, Y)],
    &[e(A, R, X), e(B, W, X), e(B, W, Y), e(A, R, Y)],
    &[e(A, R, X), e(B, W, Y), e(B, W, X), e(A, R, Y)],
    &[e(A, R, X), e(B, W, Y), e(A, R, Y), e(B, W, X)],
    &[e(A, W, X), e(B, R, Y), e(A, W, Y), e(B, R, X)],
];

/// The pattern catalog in id order.
pub fn catalog() -> Vec<Pattern> {
    CATALOG
        .iter()
        .enumerate()
        .map(|(i, t)| Pattern { id: i as u8 + 1, template: t.to_vec() })
        .collect()
}

/// Whether every template entry has a conflicting partner in the template:
/// same location, other thread, and at least one write.
pub fn has_conflicting_partners(p: &Pattern) -> bool {
    p.template.iter().all(|a| {
        p.template
            .iter()
            .any(|b| a.loc == b.loc && a.thread != b.thread && (a.op == W || b.op == W))
    })
}

/// A concrete memory access in a dynamic trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Access {
    pub thread: usize,
    pub op: AccessOp,
    pub loc: String,
}

impl Access {
    pub fn new(thread: usize, op: AccessOp, loc: impl Into<String>) -> Self {
        Access { thread, op, loc: loc.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceWindow {
    pub events: Vec<Access>,
}

struct Binding<'a> {
    threads: [usize; 2],
    locs: [&'a str; 2],
}

impl Binding<'_> {
    fn accepts(&self, t: &TemplateEntry, a: &Access) -> bool {
        t.op == a.op && self.threads[t.thread as usize] == a.thread && self.locs[t.loc as usize] == a.loc
    }
}

/// Every binding of the template symbols to distinct concrete threads and
/// (where both are used) distinct locations drawn from `events`.
fn bindings<'a>(p: &Pattern, events: &'a [Access]) -> Vec<Binding<'a>> {
    let threads: BTreeSet<usize> = events.iter().map(|a| a.thread).collect();
    let locs: BTreeSet<&str> = events.iter().map(|a| a.loc.as_str()).collect();
    let mut out = Vec::new();
    for &ta in &threads {
        for &tb in threads.iter().filter(|&&t| t != ta) {
            for &x in &locs {
                if p.uses_both_locations() {
                    for &y in locs.iter().filter(|&&y| y != x) {
                        out.push(Binding { threads: [ta, tb], locs: [x, y] });
                    }
                } else {
                    out.push(Binding { threads: [ta, tb], locs: [x, x] });
                }
            }
        }
    }
    out
}

/// Ids of every pattern whose template unifies with the whole window.
pub fn match_window(w: &TraceWindow) -> BTreeSet<u8> {
    catalog()
        .into_iter()
        .filter(|p| p.template.len() == w.events.len())
        .filter(|p| {
            bindings(p, &w.events)
                .iter()
                .any(|b| p.template.iter().zip(&w.events).all(|(t, a)| b.accepts(t, a)))
        })
        .map(|p| p.id)
        .collect()
}

/// Earliest order-preserving occurrence of a pattern in a sequence of
/// accesses, as indices into `events`.
pub fn find_pattern(p: &Pattern, events: &[Access]) -> Option<Vec<usize>> {
    for b in bindings(p, events) {
        // Greedy earliest matching is complete for subsequence search once
        // all symbols are bound.
        let mut hits = Vec::with_capacity(p.template.len());
        let mut next = 0;
        for t in &p.template {
            match (next..events.len()).find(|&i| b.accepts(t, &events[i])) {
                Some(i) => {
                    hits.push(i);
                    next = i + 1;
                }
                None => break,
            }
        }
        if hits.len() == p.template.len() {
            return Some(hits);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BugClass {
    RaceOrOrderViolation,
    AtomicityViolation,
    Deadlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub class: BugClass,
    pub patterns: BTreeSet<u8>,
    /// For each matched pattern, the trace indices of its earliest window.
    pub witnesses: BTreeMap<u8, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatternError {
    #[error("failing trace matches no memory-access pattern")]
    NoPatternFound,
    #[error("trace does not fail")]
    NotFailing,
}

/// Scans a failing trace for pattern windows and derives the coarse bug
/// class. Deadlocks are classified without matching.
pub fn classify_bug(trace: &Trace) -> Result<Classification, PatternError> {
    match trace.verdict {
        Verdict::NoBugFound => return Err(PatternError::NotFailing),
        Verdict::Deadlock => {
            return Ok(Classification {
                class: BugClass::Deadlock,
                patterns: BTreeSet::new(),
                witnesses: BTreeMap::new(),
            })
        }
        Verdict::AssertionFailure => {}
    }
    let mut positions = Vec::new();
    let mut accesses = Vec::new();
    for (i, ev) in trace.events.iter().enumerate() {
        if let (Some(op), Some(loc)) = (ev.kind.access(), &ev.loc) {
            positions.push(i);
            accesses.push(Access::new(ev.thread, op, loc.clone()));
        }
    }
    let mut witnesses = BTreeMap::new();
    for p in catalog() {
        if let Some(hits) = find_pattern(&p, &accesses) {
            witnesses.insert(p.id, hits.into_iter().map(|h| positions[h]).collect());
        }
    }
    if witnesses.is_empty() {
        return Err(PatternError::NoPatternFound);
    }
    let patterns: BTreeSet<u8> = witnesses.keys().copied().collect();
    let class = if patterns.iter().any(|&id| id >= 4) {
        BugClass::AtomicityViolation
    } else {
        BugClass::RaceOrOrderViolation
    };
    Ok(Classification { class, patterns, witnesses })
}

//! Shared helpers for the integration tests: corpus access, random program
//! generators and a dynamic oracle for happens-before claims.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;
use std::path::{Path, PathBuf};

use confx_core::explorer::{enumerate, ExploreOptions};
use confx_core::graphs::{Event, HbRelation, StaticHappensBeforeGraph};
use confx_core::lang::{parse, Expr, Program, Span, Stmt, StmtKind};
use proptest::prelude::*;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// One corpus program with its manifest (kept as plain JSON so the tests do
/// not depend on the CLI crate).
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    pub text: String,
    pub manifest: serde_json::Value,
}

impl CorpusEntry {
    pub fn program(&self) -> Program {
        parse(&self.text).unwrap_or_else(|e| panic!("{}: {e}", self.name))
    }

    pub fn is_buggy(&self) -> bool {
        self.manifest["bug_type"] != "none"
    }

    pub fn bug_type(&self) -> &str {
        self.manifest["bug_type"].as_str().unwrap_or("?")
    }

    pub fn reference_methods(&self) -> Vec<String> {
        self.manifest["reference_methods"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default()
    }

    pub fn fixed_path(&self) -> PathBuf {
        self.path.with_file_name(format!("{}.fixed.mc", self.name))
    }

    pub fn fixed_text(&self) -> Option<String> {
        std::fs::read_to_string(self.fixed_path()).ok()
    }

    pub fn mock_path(&self) -> Option<PathBuf> {
        self.manifest["mock"].as_str().map(|m| self.path.with_file_name(m))
    }
}

/// Every program of the bundled corpus, sorted by name.
pub fn corpus() -> Vec<CorpusEntry> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(corpus_dir()).expect("corpus directory") {
        let path = entry.unwrap().path();
        let file = path.file_name().unwrap().to_string_lossy().into_owned();
        if !file.ends_with(".mc") || file.ends_with(".fixed.mc") {
            continue;
        }
        let name = file.trim_end_matches(".mc").to_string();
        let manifest_path = path.with_file_name(format!("{name}.expect.json"));
        let manifest = serde_json::from_str(&std::fs::read_to_string(&manifest_path).expect("manifest"))
            .unwrap_or_else(|e| panic!("{}: {e}", manifest_path.display()));
        let text = std::fs::read_to_string(&path).unwrap();
        out.push(CorpusEntry { name, path, text, manifest });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

pub fn corpus_entry(name: &str) -> CorpusEntry {
    corpus().into_iter().find(|e| e.name == name).unwrap_or_else(|| panic!("no corpus program {name}"))
}

// ---------------------------------------------------------------------------
// Structural comparison

fn erase_expr(e: &mut Expr) {
    match e {
        Expr::Var { span, .. } => *span = Span::new(0, 0),
        Expr::Unary(_, inner) => erase_expr(inner),
        Expr::Binary(_, l, r) => {
            erase_expr(l);
            erase_expr(r);
        }
        Expr::Lit(_) => {}
    }
}

fn erase_stmts(stmts: &mut [Stmt]) {
    for s in stmts {
        s.span = Span::new(0, 0);
        match &mut s.kind {
            StmtKind::Let { expr, .. } | StmtKind::Assign { expr, .. } => erase_expr(expr),
            StmtKind::If { cond, then_branch, else_branch } => {
                erase_expr(cond);
                erase_stmts(then_branch);
                erase_stmts(else_branch);
            }
            StmtKind::While { cond, body, .. } => {
                erase_expr(cond);
                erase_stmts(body);
            }
            StmtKind::Lock { body, .. } => erase_stmts(body),
            StmtKind::Spawn { args, .. } | StmtKind::Call { args, .. } => args.iter_mut().for_each(erase_expr),
            StmtKind::Assert { cond } => erase_expr(cond),
            _ => {}
        }
    }
}

/// The program with every span and the source text blanked, so that two
/// parses of differently formatted text compare equal.
pub fn shape(p: &Program) -> Program {
    let mut q = p.clone();
    q.source_text.clear();
    for g in &mut q.globals {
        g.span = Span::new(0, 0);
    }
    for l in &mut q.locks {
        l.span = Span::new(0, 0);
    }
    for c in &mut q.conds {
        c.span = Span::new(0, 0);
    }
    for m in q.methods.values_mut() {
        m.span = Span::new(0, 0);
        m.body_span = Span::new(0, 0);
        erase_stmts(&mut m.body);
    }
    q
}

// ---------------------------------------------------------------------------
// Random programs

/// Statement skeletons; indices are taken modulo the number of globals,
/// locks or helpers when rendering.
#[derive(Debug, Clone)]
pub enum GenStmt {
    Write(usize, i8),
    Incr(usize),
    Read(usize),
    Locked(usize, Vec<GenStmt>),
    Branch(usize, Vec<GenStmt>, Vec<GenStmt>),
    Loop(u8, Vec<GenStmt>),
    Call(usize),
    Skip,
}

#[derive(Debug, Clone)]
pub struct GenProgram {
    pub globals: usize,
    pub locks: usize,
    pub helpers: Vec<Vec<GenStmt>>,
    pub workers: Vec<Vec<GenStmt>>,
    /// Worker index for each spawn in `main`.
    pub spawns: Vec<usize>,
    pub main_before: Vec<GenStmt>,
    pub main_between: Vec<GenStmt>,
    pub main_after: Vec<GenStmt>,
    /// Number of never-called methods to append.
    pub dead: usize,
    pub comments: bool,
}

fn leaf() -> impl Strategy<Value = GenStmt> + Clone {
    prop_oneof![
        (0..4usize, -3..4i8).prop_map(|(g, v)| GenStmt::Write(g, v)),
        (0..4usize).prop_map(GenStmt::Incr),
        (0..4usize).prop_map(GenStmt::Read),
        (0..3usize).prop_map(GenStmt::Call),
        Just(GenStmt::Skip),
    ]
}

pub fn gen_stmt() -> impl Strategy<Value = GenStmt> {
    leaf().prop_recursive(2, 12, 3, |inner| {
        prop_oneof![
            (0..3usize, prop::collection::vec(inner.clone(), 1..3)).prop_map(|(l, b)| GenStmt::Locked(l, b)),
            (0..4usize, prop::collection::vec(inner.clone(), 1..3), prop::collection::vec(inner.clone(), 0..2))
                .prop_map(|(g, t, e)| GenStmt::Branch(g, t, e)),
            (1..3u8, prop::collection::vec(inner, 1..3)).prop_map(|(n, b)| GenStmt::Loop(n, b)),
        ]
    })
}

fn gen_block(max: usize) -> impl Strategy<Value = Vec<GenStmt>> {
    prop::collection::vec(gen_stmt(), 0..max)
}

/// Programs of moderate size for static properties.
pub fn gen_program() -> impl Strategy<Value = GenProgram> {
    (
        1..4usize,
        1..3usize,
        prop::collection::vec(gen_block(3), 0..3),
        prop::collection::vec(gen_block(5), 1..4),
        prop::collection::vec(0..4usize, 1..4),
        (gen_block(3), gen_block(2), gen_block(3)),
        0..2usize,
        any::<bool>(),
    )
        .prop_map(|(globals, locks, helpers, workers, spawns, (before, between, after), dead, comments)| GenProgram {
            globals,
            locks,
            helpers,
            workers,
            spawns,
            main_before: before,
            main_between: between,
            main_after: after,
            dead,
            comments,
        })
}

/// Programs small enough to enumerate every schedule.
pub fn gen_small_program() -> impl Strategy<Value = GenProgram> {
    let small = prop::collection::vec(leaf(), 0..3);
    (
        1..3usize,
        prop::collection::vec(prop::collection::vec(leaf(), 1..3), 1..3),
        prop::collection::vec(0..2usize, 1..3),
        small.clone(),
        small.clone(),
        small,
    )
        .prop_map(|(globals, workers, spawns, before, between, after)| GenProgram {
            globals,
            locks: 1,
            helpers: Vec::new(),
            workers,
            spawns,
            main_before: before,
            main_between: between,
            main_after: after,
            dead: 0,
            comments: false,
        })
}

struct Renderer<'a> {
    g: &'a GenProgram,
    out: String,
    locals: usize,
    /// Drop lock wrappers, keeping their bodies.
    unlocked: bool,
}

impl Renderer<'_> {
    fn global(&self, i: usize) -> String {
        format!("g{}", i % self.g.globals)
    }

    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        if self.g.comments && self.out.len() % 3 == 0 {
            self.out.push_str(" // note");
        }
        self.out.push('\n');
    }

    fn stmts(&mut self, depth: usize, body: &[GenStmt], helper_limit: usize) {
        for s in body {
            self.stmt(depth, s, helper_limit);
        }
    }

    fn stmt(&mut self, depth: usize, s: &GenStmt, helper_limit: usize) {
        match s {
            GenStmt::Write(g, v) => {
                let line = format!("{} = {};", self.global(*g), v);
                self.line(depth, &line)
            }
            GenStmt::Incr(g) => {
                let g = self.global(*g);
                self.line(depth, &format!("{g} = {g} + 1;"))
            }
            GenStmt::Read(g) => {
                self.locals += 1;
                let line = format!("let v{} = {};", self.locals, self.global(*g));
                self.line(depth, &line)
            }
            GenStmt::Call(h) => {
                if helper_limit == 0 {
                    self.line(depth, "skip;")
                } else {
                    self.line(depth, &format!("h{}();", h % helper_limit))
                }
            }
            GenStmt::Skip => self.line(depth, "skip;"),
            GenStmt::Locked(l, body) => {
                if self.unlocked {
                    self.stmts(depth, body, helper_limit);
                } else {
                    self.line(depth, &format!("lock(m{}) {{", l % self.g.locks));
                    if self.g.comments {
                        self.line(depth + 1, "/* critical */");
                    }
                    self.stmts(depth + 1, body, helper_limit);
                    self.line(depth, "}");
                }
            }
            GenStmt::Branch(g, t, e) => {
                let line = format!("if ({} > 0) {{", self.global(*g));
                self.line(depth, &line);
                self.stmts(depth + 1, t, helper_limit);
                if e.is_empty() {
                    self.line(depth, "}");
                } else {
                    self.line(depth, "} else {");
                    self.stmts(depth + 1, e, helper_limit);
                    self.line(depth, "}");
                }
            }
            GenStmt::Loop(n, body) => {
                let line = format!("while ({} < 100) bound {n} {{", self.global(0));
                self.line(depth, &line);
                self.stmts(depth + 1, body, helper_limit);
                self.line(depth, "}");
            }
        }
    }

    fn render(mut self) -> String {
        let g = self.g;
        if g.comments {
            self.out.push_str("// generated program\n");
        }
        for i in 0..g.globals {
            let _ = writeln!(self.out, "shared int g{i} = 0;");
        }
        for i in 0..g.locks {
            let _ = writeln!(self.out, "lock m{i};");
        }
        // Helper i may call helpers below i, so calls never recurse.
        for (i, body) in g.helpers.iter().enumerate() {
            let _ = writeln!(self.out, "\nh{i}() {{");
            self.stmts(1, body, i);
            self.out.push_str("}\n");
        }
        for (i, body) in g.workers.iter().enumerate() {
            let _ = writeln!(self.out, "\nw{i}() {{");
            self.stmts(1, body, g.helpers.len());
            self.out.push_str("}\n");
        }
        for i in 0..g.dead {
            let _ = writeln!(self.out, "\n/* never called */\ndead{i}() {{\n    g0 = {i};\n}}");
        }
        self.out.push_str("\nmain() {\n");
        self.stmts(1, &g.main_before, g.helpers.len());
        for (i, w) in g.spawns.iter().enumerate() {
            let line = format!("spawn t{i} = w{}();", w % g.workers.len());
            self.line(1, &line);
        }
        self.stmts(1, &g.main_between, g.helpers.len());
        for i in 0..g.spawns.len() {
            self.line(1, &format!("join t{i};"));
        }
        self.stmts(1, &g.main_after, g.helpers.len());
        self.out.push_str("}\n");
        self.out
    }
}

impl GenProgram {
    pub fn render(&self) -> String {
        Renderer { g: self, out: String::new(), locals: 0, unlocked: false }.render()
    }

    /// The same program with every lock wrapper removed.
    pub fn render_unlocked(&self) -> String {
        Renderer { g: self, out: String::new(), locals: 0, unlocked: true }.render()
    }
}

/// A program with `threads` workers that together perform about `events`
/// shared accesses. Half of each worker's increments are locked, and every
/// third worker goes through a helper so the caller closure has work to do.
pub fn stress_program(events: usize, threads: usize) -> String {
    let per_thread = (events / threads / 2).max(1);
    let globals = 8;
    let mut out = String::new();
    for i in 0..globals {
        let _ = writeln!(out, "shared int s{i} = 0;");
    }
    out.push_str("lock k0;\nlock k1;\n");
    for t in 0..threads {
        let _ = writeln!(out, "\nbody{t}() {{");
        for j in 0..per_thread {
            let g = (t * 7 + j) % globals;
            if j % 2 == 0 {
                let _ = writeln!(out, "    lock(k{}) {{ s{g} = s{g} + 1; }}", j % 4 / 2);
            } else {
                let _ = writeln!(out, "    s{g} = s{g} + 1;");
            }
        }
        out.push_str("}\n");
        if t % 3 == 0 {
            let _ = writeln!(out, "\nworker{t}() {{\n    body{t}();\n}}");
        } else {
            let _ = writeln!(out, "\nworker{t}() {{\n    skip;\n    body{t}();\n}}");
        }
    }
    out.push_str("\nmain() {\n");
    for t in 0..threads {
        let _ = writeln!(out, "    spawn t{t} = worker{t}();");
    }
    for t in 0..threads {
        let _ = writeln!(out, "    join t{t};");
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------------
// Dynamic oracle for happens-before claims

/// A pair `(a, b)` classified `Before` whose first dynamic occurrences
/// appeared in the opposite order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HbViolation {
    pub before: Event,
    pub after: Event,
    pub schedule: Vec<usize>,
}

/// Enumerates every schedule of `p` and checks that no pair classified
/// `Before` by `g` is observed the other way round, comparing first
/// occurrences. Two events of the same static thread are compared within each
/// dynamic instance of that thread, and only when both ran exactly once
/// there; a loop legitimately repeats program-ordered statements.
/// Returns the number of executions and the violations found.
pub fn check_hb_against_executions(
    p: &Program,
    g: &StaticHappensBeforeGraph,
    max_schedules: usize,
) -> (usize, Vec<HbViolation>) {
    let keys: HashMap<_, _> = g
        .events()
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.thread.chain.clone(), e.statement.clone(), e.op, e.location.clone()), i))
        .collect();
    let before: Vec<(usize, usize)> = (0..g.len())
        .flat_map(|a| (0..g.len()).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && g.classify_indices(a, b) == HbRelation::Before)
        .collect();
    let mut violations = Vec::new();
    let count = enumerate(p, ExploreOptions::default(), max_schedules, |exec| {
        // First position of each static event, overall and per dynamic thread.
        let mut first: BTreeMap<usize, usize> = BTreeMap::new();
        let mut first_in: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut runs_in: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (pos, ev) in exec.events.iter().enumerate() {
            let (Some(op), Some(loc)) = (ev.kind.access(), ev.loc.as_deref()) else { continue };
            let Some(chain) = exec.thread_chains.get(ev.thread) else { continue };
            if let Some(&i) = keys.get(&(chain.clone(), ev.stmt.clone(), op, loc.to_string())) {
                first.entry(i).or_insert(pos);
                first_in.entry((ev.thread, i)).or_insert(pos);
                *runs_in.entry((ev.thread, i)).or_default() += 1;
            }
        }
        let once = |t: usize, e: usize| runs_in.get(&(t, e)) == Some(&1);
        for &(a, b) in &before {
            let same_thread = g.thread_of(a) == g.thread_of(b);
            let violated = if same_thread {
                first_in
                    .iter()
                    .filter(|((t, e), _)| *e == a && once(*t, a) && once(*t, b))
                    .any(|((t, _), &pa)| first_in.get(&(*t, b)).is_some_and(|&pb| pb < pa))
            } else {
                matches!((first.get(&a), first.get(&b)), (Some(pa), Some(pb)) if pb < pa)
            };
            if violated && violations.len() < 10 {
                violations.push(HbViolation {
                    before: g.events()[a].clone(),
                    after: g.events()[b].clone(),
                    schedule: exec.schedule.clone(),
                });
            }
        }
    })
    .expect("schedule budget");
    (count, violations)
}

//! Lowering of method bodies to a small stack machine.

use std::collections::HashMap;

use crate::lang::{BinaryOp, Expr, Literal, MethodId, Program, Scope, Stmt, StmtKind, UnaryOp};

use super::machine::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Push(Value),
    LoadLocal(usize),
    StoreLocal(usize),
    LoadGlobal(usize),
    StoreGlobal(usize),
    Unary(UnaryOp),
    Binary(BinaryOp),
    Jump(usize),
    JumpIfFalse(usize),
    /// Sets a hidden counter slot to the loop bound.
    LoopInit { slot: usize, bound: u32 },
    /// Leaves the loop when the counter is spent, otherwise decrements it.
    LoopCheck { slot: usize, exit: usize },
    Acquire(usize),
    Release(usize),
    Wait(usize),
    Notify(usize),
    NotifyAll(usize),
    Spawn { handle: usize, method: usize, argc: usize },
    Join(usize),
    Call { method: usize, argc: usize },
    Assert,
    Return,
}

impl Instr {
    /// Instructions that touch shared state and are therefore scheduling
    /// points.
    pub fn is_visible(&self) -> bool {
        matches!(
            self,
            Instr::LoadGlobal(_)
                | Instr::StoreGlobal(_)
                | Instr::Acquire(_)
                | Instr::Wait(_)
                | Instr::Notify(_)
                | Instr::NotifyAll(_)
                | Instr::Join(_)
        )
    }
}

#[derive(Debug, Clone)]
pub struct Code {
    pub method: MethodId,
    pub n_params: usize,
    pub n_locals: usize,
    pub n_handles: usize,
    /// Each instruction with the ordinal of its source statement.
    pub instrs: Vec<(Instr, u32)>,
}

#[derive(Debug, Clone)]
pub struct Compiled {
    pub codes: Vec<Code>,
    pub entry: usize,
    pub globals: Vec<String>,
    pub initial: Vec<Value>,
    pub locks: Vec<String>,
    pub conds: Vec<String>,
    /// Monitor lock index of each condition variable.
    pub monitors: Vec<usize>,
}

pub fn compile(p: &Program) -> Compiled {
    let globals: Vec<String> = p.globals.iter().map(|g| g.name.clone()).collect();
    let initial = p
        .globals
        .iter()
        .map(|g| match g.init {
            Literal::Int(v) => Value::Int(v),
            Literal::Bool(b) => Value::Bool(b),
        })
        .collect();
    let locks: Vec<String> = p.locks.iter().map(|l| l.name.clone()).collect();
    let conds: Vec<String> = p.conds.iter().map(|c| c.name.clone()).collect();
    let monitors = p
        .conds
        .iter()
        .map(|c| locks.iter().position(|l| *l == c.monitor).expect("monitor declared"))
        .collect();
    let method_ids: Vec<&MethodId> = p.methods.keys().collect();
    let method_index: HashMap<&MethodId, usize> = method_ids.iter().enumerate().map(|(i, m)| (*m, i)).collect();

    let ctx = Ctx {
        globals: globals.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect(),
        locks: locks.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect(),
        conds: conds.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect(),
        methods: method_index.clone(),
    };
    let codes = p
        .methods
        .values()
        .map(|m| {
            let mut c = MethodCompiler { ctx: &ctx, locals: HashMap::new(), handles: HashMap::new(), n_slots: 0, out: Vec::new() };
            for param in &m.params {
                c.slot(param);
            }
            c.block(&m.body);
            c.out.push((Instr::Return, 0));
            Code {
                method: m.name.clone(),
                n_params: m.params.len(),
                n_locals: c.n_slots,
                n_handles: c.handles.len(),
                instrs: c.out,
            }
        })
        .collect();
    Compiled { codes, entry: method_index[&p.entry], globals, initial, locks, conds, monitors }
}

struct Ctx<'p> {
    globals: HashMap<&'p str, usize>,
    locks: HashMap<&'p str, usize>,
    conds: HashMap<&'p str, usize>,
    methods: HashMap<&'p MethodId, usize>,
}

struct MethodCompiler<'c, 'p> {
    ctx: &'c Ctx<'p>,
    locals: HashMap<String, usize>,
    handles: HashMap<String, usize>,
    n_slots: usize,
    out: Vec<(Instr, u32)>,
}

impl MethodCompiler<'_, '_> {
    fn slot(&mut self, name: &str) -> usize {
        if let Some(&s) = self.locals.get(name) {
            return s;
        }
        let s = self.fresh();
        self.locals.insert(name.to_string(), s);
        s
    }

    fn fresh(&mut self) -> usize {
        self.n_slots += 1;
        self.n_slots - 1
    }

    fn handle(&mut self, name: &str) -> usize {
        let n = self.handles.len();
        *self.handles.entry(name.to_string()).or_insert(n)
    }

    fn emit(&mut self, i: Instr, stmt: u32) -> usize {
        self.out.push((i, stmt));
        self.out.len() - 1
    }

    fn patch(&mut self, at: usize, target: usize) {
        match &mut self.out[at].0 {
            Instr::Jump(t) | Instr::JumpIfFalse(t) | Instr::LoopCheck { exit: t, .. } => *t = target,
            other => unreachable!("not a jump: {other:?}"),
        }
    }

    fn block(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn expr(&mut self, e: &Expr, stmt: u32) {
        match e {
            Expr::Lit(Literal::Int(v)) => {
                self.emit(Instr::Push(Value::Int(*v)), stmt);
            }
            Expr::Lit(Literal::Bool(b)) => {
                self.emit(Instr::Push(Value::Bool(*b)), stmt);
            }
            Expr::Var { name, scope: Scope::Global, .. } => {
                self.emit(Instr::LoadGlobal(self.ctx.globals[name.as_str()]), stmt);
            }
            Expr::Var { name, .. } => {
                let s = self.slot(name);
                self.emit(Instr::LoadLocal(s), stmt);
            }
            Expr::Unary(op, inner) => {
                self.expr(inner, stmt);
                self.emit(Instr::Unary(*op), stmt);
            }
            Expr::Binary(op, l, r) => {
                self.expr(l, stmt);
                self.expr(r, stmt);
                self.emit(Instr::Binary(*op), stmt);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        let id = s.id.ordinal;
        match &s.kind {
            StmtKind::Let { name, expr } => {
                self.expr(expr, id);
                let slot = self.slot(name);
                self.emit(Instr::StoreLocal(slot), id);
            }
            StmtKind::Assign { target, scope, expr } => {
                self.expr(expr, id);
                if *scope == Scope::Global {
                    self.emit(Instr::StoreGlobal(self.ctx.globals[target.as_str()]), id);
                } else {
                    let slot = self.slot(target);
                    self.emit(Instr::StoreLocal(slot), id);
                }
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                self.expr(cond, id);
                let jf = self.emit(Instr::JumpIfFalse(0), id);
                self.block(then_branch);
                let jend = self.emit(Instr::Jump(0), id);
                let else_at = self.out.len();
                self.patch(jf, else_at);
                self.block(else_branch);
                let end = self.out.len();
                self.patch(jend, end);
            }
            StmtKind::While { cond, bound, body } => {
                let counter = self.fresh();
                self.emit(Instr::LoopInit { slot: counter, bound: *bound }, id);
                let top = self.emit(Instr::LoopCheck { slot: counter, exit: 0 }, id);
                self.expr(cond, id);
                let jf = self.emit(Instr::JumpIfFalse(0), id);
                self.block(body);
                self.emit(Instr::Jump(top), id);
                let end = self.out.len();
                self.patch(top, end);
                self.patch(jf, end);
            }
            StmtKind::Lock { lock, body } => {
                let l = self.ctx.locks[lock.as_str()];
                self.emit(Instr::Acquire(l), id);
                self.block(body);
                self.emit(Instr::Release(l), id);
            }
            StmtKind::Wait { cond } => {
                self.emit(Instr::Wait(self.ctx.conds[cond.as_str()]), id);
            }
            StmtKind::Notify { cond } => {
                self.emit(Instr::Notify(self.ctx.conds[cond.as_str()]), id);
            }
            StmtKind::NotifyAll { cond } => {
                self.emit(Instr::NotifyAll(self.ctx.conds[cond.as_str()]), id);
            }
            StmtKind::Spawn { handle, method, args } => {
                for a in args {
                    self.expr(a, id);
                }
                let h = self.handle(handle);
                self.emit(Instr::Spawn { handle: h, method: self.ctx.methods[method], argc: args.len() }, id);
            }
            StmtKind::Join { handle } => {
                let h = self.handle(handle);
                self.emit(Instr::Join(h), id);
            }
            StmtKind::Call { method, args } => {
                for a in args {
                    self.expr(a, id);
                }
                self.emit(Instr::Call { method: self.ctx.methods[method], argc: args.len() }, id);
            }
            StmtKind::Assert { cond } => {
                self.expr(cond, id);
                self.emit(Instr::Assert, id);
            }
            StmtKind::Skip => {}
        }
    }
}

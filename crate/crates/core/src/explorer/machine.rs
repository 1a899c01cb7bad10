//! Interpreter state and single-step semantics.
//!
//! A step runs one visible instruction of the chosen thread and then lets that
//! thread continue through thread-local instructions until its next visible
//! one. Locks are reentrant; `wait` releases the whole hold count and the
//! woken thread must reacquire it before continuing.

use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{BinaryOp, Program, StatementId, UnaryOp};

use super::compile::{compile, Compiled, Instr};
use super::trace::{TraceEvent, TraceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum FaultKind {
    AssertionFailed,
    DivisionByZero,
    TypeError,
    IllegalMonitorState,
    UnsetHandle,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Fault {
    pub thread: usize,
    pub stmt: StatementId,
    pub kind: FaultKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Waiting { cond: usize, count: u32 },
    Reacquiring { lock: usize, count: u32 },
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub code: usize,
    pub pc: usize,
    pub locals: Vec<Value>,
    pub handles: Vec<Option<usize>>,
    /// Ordinal of the call statement in the caller; 0 for a thread's entry.
    pub call_site: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThreadState {
    pub frames: Vec<Frame>,
    pub stack: Vec<Value>,
    pub status: Status,
    /// Index into the machine's chain table.
    pub chain: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct LockState {
    pub owner: Option<usize>,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct State {
    pub globals: Vec<Value>,
    pub locks: Vec<LockState>,
    pub queues: Vec<VecDeque<usize>>,
    pub threads: Vec<ThreadState>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Running,
    Finished,
    Deadlock,
    Fault,
}

pub struct Machine {
    pub compiled: Compiled,
    chains: RefCell<(Vec<Vec<StatementId>>, HashMap<Vec<StatementId>, usize>)>,
}

impl Machine {
    pub fn new(p: &Program) -> Self {
        let root = Vec::new();
        Machine {
            compiled: compile(p),
            chains: RefCell::new((vec![root.clone()], HashMap::from([(root, 0)]))),
        }
    }

    /// Spawn-site chain of a thread, matching static thread ids.
    pub fn chain(&self, index: usize) -> Vec<StatementId> {
        self.chains.borrow().0[index].clone()
    }

    fn intern(&self, chain: Vec<StatementId>) -> usize {
        let mut c = self.chains.borrow_mut();
        if let Some(&i) = c.1.get(&chain) {
            return i;
        }
        let i = c.0.len();
        c.0.push(chain.clone());
        c.1.insert(chain, i);
        i
    }

    pub fn sid(&self, code: usize, ordinal: u32) -> StatementId {
        StatementId { method: self.compiled.codes[code].method.clone(), ordinal }
    }

    pub fn initial(&self, events: &mut Vec<TraceEvent>) -> State {
        let c = &self.compiled;
        let entry = &c.codes[c.entry];
        let mut s = State {
            globals: c.initial.clone(),
            locks: vec![LockState::default(); c.locks.len()],
            queues: vec![VecDeque::new(); c.conds.len()],
            threads: vec![ThreadState {
                frames: vec![Frame {
                    code: c.entry,
                    pc: 0,
                    locals: vec![Value::Int(0); entry.n_locals],
                    handles: vec![None; entry.n_handles],
                    call_site: 0,
                }],
                stack: Vec::new(),
                status: Status::Running,
                chain: 0,
            }],
            fault: None,
        };
        self.normalize(&mut s, 0, events);
        s
    }

    fn current(&self, t: &ThreadState) -> Option<(&Instr, u32, usize)> {
        let f = t.frames.last()?;
        let (i, stmt) = &self.compiled.codes[f.code].instrs[f.pc];
        Some((i, *stmt, f.code))
    }

    pub fn is_runnable(&self, s: &State, tid: usize) -> bool {
        if s.fault.is_some() {
            return false;
        }
        let t = &s.threads[tid];
        match t.status {
            Status::Done | Status::Waiting { .. } => false,
            Status::Reacquiring { lock, .. } => s.locks[lock].owner.is_none(),
            Status::Running => match self.current(t) {
                Some((Instr::Acquire(l), _, _)) => match s.locks[*l].owner {
                    None => true,
                    Some(o) => o == tid,
                },
                Some((Instr::Join(h), _, _)) => match t.frames.last().unwrap().handles[*h] {
                    Some(child) => s.threads[child].status == Status::Done,
                    None => true,
                },
                Some(_) => true,
                None => false,
            },
        }
    }

    pub fn runnable(&self, s: &State) -> Vec<usize> {
        (0..s.threads.len()).filter(|&t| self.is_runnable(s, t)).collect()
    }

    pub fn outcome(&self, s: &State) -> Outcome {
        if s.fault.is_some() {
            Outcome::Fault
        } else if s.threads.iter().all(|t| t.status == Status::Done) {
            Outcome::Finished
        } else if (0..s.threads.len()).any(|t| self.is_runnable(s, t)) {
            Outcome::Running
        } else {
            Outcome::Deadlock
        }
    }

    /// Runs one visible operation of `tid`, then its local continuation.
    pub fn step(&self, s: &mut State, tid: usize, events: &mut Vec<TraceEvent>) {
        debug_assert!(self.is_runnable(s, tid));
        if let Status::Reacquiring { lock, count } = s.threads[tid].status {
            s.locks[lock] = LockState { owner: Some(tid), count };
            s.threads[tid].status = Status::Running;
            // The wait instruction is the one just before the current pc.
            let f = s.threads[tid].frames.last().expect("woken thread has a frame");
            let (code, wait_stmt) = (f.code, self.compiled.codes[f.code].instrs[f.pc - 1].1);
            events.push(TraceEvent {
                thread: tid,
                stmt: self.sid(code, wait_stmt),
                kind: TraceKind::Wake,
                loc: Some(self.compiled.locks[lock].clone()),
            });
        } else {
            self.exec(s, tid, events);
        }
        self.normalize(s, tid, events);
    }

    fn normalize(&self, s: &mut State, tid: usize, events: &mut Vec<TraceEvent>) {
        while s.fault.is_none() && s.threads[tid].status == Status::Running {
            match self.current(&s.threads[tid]) {
                Some((i, _, _)) if i.is_visible() => break,
                Some(_) => self.exec(s, tid, events),
                None => s.threads[tid].status = Status::Done,
            }
        }
    }

    fn fault(&self, s: &mut State, tid: usize, stmt: StatementId, kind: FaultKind, message: String, events: &mut Vec<TraceEvent>) {
        events.push(TraceEvent { thread: tid, stmt: stmt.clone(), kind: TraceKind::Fail, loc: None });
        s.fault = Some(Fault { thread: tid, stmt, kind, message });
    }

    fn exec(&self, s: &mut State, tid: usize, events: &mut Vec<TraceEvent>) {
        let (instr, ordinal, code) = {
            let (i, o, c) = self.current(&s.threads[tid]).expect("running thread has a frame");
            (i.clone(), o, c)
        };
        let sid = || self.sid(code, ordinal);
        let c = &self.compiled;
        s.threads[tid].frames.last_mut().unwrap().pc += 1;
        macro_rules! fail {
            ($kind:expr, $($msg:tt)*) => {{
                let m = format!($($msg)*);
                self.fault(s, tid, sid(), $kind, m, events);
                return;
            }};
        }
        let t = &mut s.threads[tid];
        match instr {
            Instr::Push(v) => t.stack.push(v),
            Instr::LoadLocal(slot) => {
                let v = t.frames.last().unwrap().locals[slot];
                t.stack.push(v);
            }
            Instr::StoreLocal(slot) => {
                let v = t.stack.pop().unwrap();
                t.frames.last_mut().unwrap().locals[slot] = v;
            }
            Instr::LoadGlobal(g) => {
                t.stack.push(s.globals[g]);
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Read, loc: Some(c.globals[g].clone()) });
            }
            Instr::StoreGlobal(g) => {
                s.globals[g] = t.stack.pop().unwrap();
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Write, loc: Some(c.globals[g].clone()) });
            }
            Instr::Unary(op) => {
                let v = t.stack.pop().unwrap();
                let r = match (op, v) {
                    (UnaryOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                    (UnaryOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    _ => fail!(FaultKind::TypeError, "operator {:?} does not apply to {v}", op),
                };
                t.stack.push(r);
            }
            Instr::Binary(op) => {
                let r = t.stack.pop().unwrap();
                let l = t.stack.pop().unwrap();
                match binary(op, l, r) {
                    Ok(v) => t.stack.push(v),
                    Err(kind) => fail!(kind, "{l} {} {r}", op.symbol()),
                }
            }
            Instr::Jump(target) => t.frames.last_mut().unwrap().pc = target,
            Instr::JumpIfFalse(target) => match t.stack.pop().unwrap() {
                Value::Bool(true) => {}
                Value::Bool(false) => t.frames.last_mut().unwrap().pc = target,
                v => fail!(FaultKind::TypeError, "condition is not a boolean: {v}"),
            },
            Instr::LoopInit { slot, bound } => t.frames.last_mut().unwrap().locals[slot] = Value::Int(bound as i64),
            Instr::LoopCheck { slot, exit } => {
                let f = t.frames.last_mut().unwrap();
                match f.locals[slot] {
                    Value::Int(n) if n > 0 => f.locals[slot] = Value::Int(n - 1),
                    _ => f.pc = exit,
                }
            }
            Instr::Acquire(l) => {
                let lock = &mut s.locks[l];
                lock.owner = Some(tid);
                lock.count += 1;
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Lock, loc: Some(c.locks[l].clone()) });
            }
            Instr::Release(l) => {
                let lock = &mut s.locks[l];
                lock.count -= 1;
                if lock.count == 0 {
                    lock.owner = None;
                }
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Unlock, loc: Some(c.locks[l].clone()) });
            }
            Instr::Wait(cv) => {
                let m = c.monitors[cv];
                if s.locks[m].owner != Some(tid) {
                    fail!(FaultKind::IllegalMonitorState, "wait on `{}` without holding `{}`", c.conds[cv], c.locks[m]);
                }
                let count = s.locks[m].count;
                s.locks[m] = LockState::default();
                s.threads[tid].status = Status::Waiting { cond: cv, count };
                s.queues[cv].push_back(tid);
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Wait, loc: Some(c.conds[cv].clone()) });
            }
            Instr::Notify(cv) | Instr::NotifyAll(cv) => {
                let m = c.monitors[cv];
                let all = matches!(instr, Instr::NotifyAll(_));
                if s.locks[m].owner != Some(tid) {
                    fail!(FaultKind::IllegalMonitorState, "notify on `{}` without holding `{}`", c.conds[cv], c.locks[m]);
                }
                let n = if all { s.queues[cv].len() } else { s.queues[cv].len().min(1) };
                for _ in 0..n {
                    let w = s.queues[cv].pop_front().unwrap();
                    if let Status::Waiting { count, .. } = s.threads[w].status {
                        s.threads[w].status = Status::Reacquiring { lock: m, count };
                    }
                }
                let kind = if all { TraceKind::NotifyAll } else { TraceKind::Notify };
                events.push(TraceEvent { thread: tid, stmt: sid(), kind, loc: Some(c.conds[cv].clone()) });
            }
            Instr::Spawn { handle, method, argc } => {
                let args = t.stack.split_off(t.stack.len() - argc);
                let mut chain = self.chain(t.chain);
                for w in t.frames.windows(2) {
                    chain.push(self.sid(w[0].code, w[1].call_site));
                }
                chain.push(sid());
                let chain = self.intern(chain);
                let child = s.threads.len();
                s.threads[tid].frames.last_mut().unwrap().handles[handle] = Some(child);
                s.threads.push(ThreadState {
                    frames: vec![self.frame(method, args, 0)],
                    stack: Vec::new(),
                    status: Status::Running,
                    chain,
                });
                events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Spawn, loc: Some(child.to_string()) });
                self.normalize(s, child, events);
            }
            Instr::Join(h) => match t.frames.last().unwrap().handles[h] {
                Some(child) => {
                    events.push(TraceEvent { thread: tid, stmt: sid(), kind: TraceKind::Join, loc: Some(child.to_string()) })
                }
                None => fail!(FaultKind::UnsetHandle, "join on a handle that was never spawned"),
            },
            Instr::Call { method, argc } => {
                let args = t.stack.split_off(t.stack.len() - argc);
                let f = self.frame(method, args, ordinal);
                t.frames.push(f);
            }
            Instr::Assert => match t.stack.pop().unwrap() {
                Value::Bool(true) => {}
                Value::Bool(false) => fail!(FaultKind::AssertionFailed, "assertion failed"),
                v => fail!(FaultKind::TypeError, "assertion on a non-boolean: {v}"),
            },
            Instr::Return => {
                t.frames.pop();
                if t.frames.is_empty() {
                    t.status = Status::Done;
                }
            }
        }
    }

    fn frame(&self, code: usize, args: Vec<Value>, call_site: u32) -> Frame {
        let c = &self.compiled.codes[code];
        let mut locals = args;
        locals.resize(c.n_locals, Value::Int(0));
        Frame { code, pc: 0, locals, handles: vec![None; c.n_handles], call_site }
    }

    /// Final values of the shared globals, by name.
    pub fn globals(&self, s: &State) -> Vec<(String, Value)> {
        self.compiled.globals.iter().cloned().zip(s.globals.iter().copied()).collect()
    }
}

fn binary(op: BinaryOp, l: Value, r: Value) -> Result<Value, FaultKind> {
    use BinaryOp::*;
    use Value::{Bool as B, Int as I};
    Ok(match (op, l, r) {
        (Add, I(a), I(b)) => I(a.wrapping_add(b)),
        (Sub, I(a), I(b)) => I(a.wrapping_sub(b)),
        (Mul, I(a), I(b)) => I(a.wrapping_mul(b)),
        (Div | Rem, I(_), I(0)) => return Err(FaultKind::DivisionByZero),
        (Div, I(a), I(b)) => I(a.wrapping_div(b)),
        (Rem, I(a), I(b)) => I(a.wrapping_rem(b)),
        (Lt, I(a), I(b)) => B(a < b),
        (Le, I(a), I(b)) => B(a <= b),
        (Gt, I(a), I(b)) => B(a > b),
        (Ge, I(a), I(b)) => B(a >= b),
        (Eq, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => B(a == b),
        (Ne, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => B(a != b),
        (And, B(a), B(b)) => B(a && b),
        (Or, B(a), B(b)) => B(a || b),
        _ => return Err(FaultKind::TypeError),
    })
}

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Span;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodId(pub String);

impl MethodId {
    pub fn new(name: impl Into<String>) -> Self {
        MethodId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for MethodId {
    fn from(s: &str) -> Self {
        MethodId(s.to_string())
    }
}

/// Method-qualified, 1-based pre-order ordinal of a statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StatementId {
    pub method: MethodId,
    pub ordinal: u32,
}

impl StatementId {
    pub fn new(method: impl Into<String>, ordinal: u32) -> Self {
        StatementId { method: MethodId(method.into()), ordinal }
    }
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.method, self.ordinal)
    }
}

impl Serialize for StatementId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StatementId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        let (m, n) = raw
            .rsplit_once('#')
            .ok_or_else(|| serde::de::Error::custom(format!("bad statement id {raw:?}")))?;
        let ordinal = n.parse().map_err(serde::de::Error::custom)?;
        Ok(StatementId::new(m, ordinal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int,
    Bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Bool(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Global {
    pub name: String,
    pub ty: ValueType,
    pub init: Literal,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockDecl {
    pub name: String,
    pub span: Span,
}

/// A condition variable bound to the monitor lock that `wait` releases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CondDecl {
    pub name: String,
    pub monitor: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Rem => "%",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Unresolved,
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Lit(Literal),
    Var { name: String, scope: Scope, span: Span },
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Shared globals read by this expression, in evaluation order (repeats kept).
    pub fn global_reads(&self, out: &mut Vec<String>) {
        match self {
            Expr::Lit(_) => {}
            Expr::Var { name, scope: Scope::Global, .. } => out.push(name.clone()),
            Expr::Var { .. } => {}
            Expr::Unary(_, e) => e.global_reads(out),
            Expr::Binary(_, l, r) => {
                l.global_reads(out);
                r.global_reads(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub id: StatementId,
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    /// `let name = expr;` declares a method-local variable.
    Let { name: String, expr: Expr },
    Assign { target: String, scope: Scope, expr: Expr },
    If { cond: Expr, then_branch: Vec<Stmt>, else_branch: Vec<Stmt> },
    While { cond: Expr, bound: u32, body: Vec<Stmt> },
    Lock { lock: String, body: Vec<Stmt> },
    Wait { cond: String },
    Notify { cond: String },
    NotifyAll { cond: String },
    Spawn { handle: String, method: MethodId, args: Vec<Expr> },
    Join { handle: String },
    Call { method: MethodId, args: Vec<Expr> },
    Assert { cond: Expr },
    Skip,
}

impl Stmt {
    /// Globals read and (optionally) written by the statement itself, not its
    /// nested blocks. Reads come first, in evaluation order.
    pub fn accesses(&self) -> (Vec<String>, Option<String>) {
        let mut reads = Vec::new();
        let mut write = None;
        match &self.kind {
            StmtKind::Let { expr, .. } => expr.global_reads(&mut reads),
            StmtKind::Assign { target, scope, expr } => {
                expr.global_reads(&mut reads);
                if *scope == Scope::Global {
                    write = Some(target.clone());
                }
            }
            StmtKind::If { cond, .. } | StmtKind::While { cond, .. } | StmtKind::Assert { cond } => {
                cond.global_reads(&mut reads)
            }
            StmtKind::Spawn { args, .. } | StmtKind::Call { args, .. } => {
                for a in args {
                    a.global_reads(&mut reads);
                }
            }
            StmtKind::Lock { .. }
            | StmtKind::Wait { .. }
            | StmtKind::Notify { .. }
            | StmtKind::NotifyAll { .. }
            | StmtKind::Join { .. }
            | StmtKind::Skip => {}
        }
        (reads, write)
    }

    pub fn children(&self) -> Vec<&[Stmt]> {
        match &self.kind {
            StmtKind::If { then_branch, else_branch, .. } => vec![then_branch, else_branch],
            StmtKind::While { body, .. } | StmtKind::Lock { body, .. } => vec![body],
            _ => Vec::new(),
        }
    }
}

/// Pre-order walk over a statement tree.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        for block in s.children() {
            walk_stmts(block, f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodBody {
    pub name: MethodId,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    /// From the method name to the closing brace.
    pub span: Span,
    /// From the opening brace to the closing brace, inclusive.
    pub body_span: Span,
}

impl MethodBody {
    pub fn statements(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        walk_stmts(&self.body, &mut |s| out.push(s));
        out
    }

    pub fn lock_count(&self) -> usize {
        self.statements().iter().filter(|s| matches!(s.kind, StmtKind::Lock { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<Global>,
    pub locks: Vec<LockDecl>,
    pub conds: Vec<CondDecl>,
    pub methods: BTreeMap<MethodId, MethodBody>,
    pub entry: MethodId,
    pub source_text: String,
}

impl Program {
    pub fn method(&self, id: &MethodId) -> Option<&MethodBody> {
        self.methods.get(id)
    }

    pub fn global(&self, name: &str) -> Option<&Global> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn cond(&self, name: &str) -> Option<&CondDecl> {
        self.conds.iter().find(|c| c.name == name)
    }

    /// Finds a statement by id.
    pub fn statement(&self, id: &StatementId) -> Option<&Stmt> {
        self.methods
            .get(&id.method)?
            .statements()
            .into_iter()
            .find(|s| s.id.ordinal == id.ordinal)
    }

    pub fn lock_count(&self) -> usize {
        self.methods.values().map(MethodBody::lock_count).sum()
    }

    /// 1-based line of a byte offset in the source text.
    pub fn line_of(&self, offset: usize) -> usize {
        super::line_col(&self.source_text, offset).0
    }
}

//! Recursive descent parser and name resolution for MiniConc.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::{line_col, LangError, Span};

pub fn parse(text: &str) -> Result<Program, LangError> {
    let tokens: Vec<Token> =
        tokenize(text)?.into_iter().filter(|t| t.kind != TokenKind::Comment).collect();
    let mut parser = Parser { text, tokens, pos: 0, ordinal: 0, method: String::new() };
    let mut program = parser.parse_program()?;
    Resolver::new(text, &program)?.resolve(&mut program)?;
    Ok(program)
}

struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    ordinal: u32,
    method: String,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&Token> {
        self.tokens.get(self.pos + n)
    }

    fn at(&self, lexeme: &str) -> bool {
        self.peek().is_some_and(|t| t.is(lexeme))
    }

    fn error_here(&self, expected: &str) -> LangError {
        let (offset, found) = match self.peek() {
            Some(t) => (t.span.start, t.lexeme.clone()),
            None => (self.text.len(), "end of input".to_string()),
        };
        let (line, column) = line_col(self.text, offset);
        LangError::Syntax { line, column, expected: expected.to_string(), found }
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        self.pos += 1;
        t
    }

    fn expect(&mut self, lexeme: &str) -> Result<Token, LangError> {
        if self.at(lexeme) {
            Ok(self.advance())
        } else {
            Err(self.error_here(&format!("`{lexeme}`")))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), LangError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                let t = self.advance();
                Ok((t.lexeme, t.span))
            }
            _ => Err(self.error_here("identifier")),
        }
    }

    fn prev_end(&self) -> usize {
        self.tokens[self.pos - 1].span.end
    }

    fn parse_program(&mut self) -> Result<Program, LangError> {
        let mut globals = Vec::new();
        let mut locks = Vec::new();
        let mut conds = Vec::new();
        let mut methods = BTreeMap::new();
        while let Some(tok) = self.peek() {
            let start = tok.span.start;
            if tok.is("shared") {
                self.advance();
                let ty = if self.at("int") {
                    ValueType::Int
                } else if self.at("bool") {
                    ValueType::Bool
                } else {
                    return Err(self.error_here("`int` or `bool`"));
                };
                self.advance();
                let (name, _) = self.ident()?;
                self.expect("=")?;
                let init = self.literal()?;
                match (ty, init) {
                    (ValueType::Int, Literal::Int(_)) | (ValueType::Bool, Literal::Bool(_)) => {}
                    _ => {
                        let (line, column) = line_col(self.text, self.tokens[self.pos - 1].span.start);
                        return Err(LangError::Syntax {
                            line,
                            column,
                            expected: format!("{} initializer", if ty == ValueType::Int { "int" } else { "bool" }),
                            found: init.to_string(),
                        });
                    }
                }
                self.expect(";")?;
                globals.push(Global { name, ty, init, span: Span::new(start, self.prev_end()) });
            } else if tok.is("lock") {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect(";")?;
                locks.push(LockDecl { name, span: Span::new(start, self.prev_end()) });
            } else if tok.is("cond") {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect("on")?;
                let (monitor, _) = self.ident()?;
                self.expect(";")?;
                conds.push(CondDecl { name, monitor, span: Span::new(start, self.prev_end()) });
            } else if tok.kind == TokenKind::Identifier {
                let m = self.method_decl()?;
                if methods.contains_key(&m.name) {
                    let (line, column) = line_col(self.text, m.span.start);
                    return Err(LangError::Syntax {
                        line,
                        column,
                        expected: "unique method name".into(),
                        found: m.name.to_string(),
                    });
                }
                methods.insert(m.name.clone(), m);
            } else {
                return Err(self.error_here("declaration or method"));
            }
        }
        Ok(Program {
            globals,
            locks,
            conds,
            methods,
            entry: MethodId::new("main"),
            source_text: self.text.to_string(),
        })
    }

    fn literal(&mut self) -> Result<Literal, LangError> {
        let negative = if self.at("-") {
            self.advance();
            true
        } else {
            false
        };
        match self.peek() {
            Some(t) if t.kind == TokenKind::Literal => {
                let t = self.advance();
                let v = self.int_value(&t)?;
                Ok(Literal::Int(if negative { -v } else { v }))
            }
            Some(t) if !negative && (t.is("true") || t.is("false")) => {
                let t = self.advance();
                Ok(Literal::Bool(t.lexeme == "true"))
            }
            _ => Err(self.error_here("literal")),
        }
    }

    fn int_value(&self, t: &Token) -> Result<i64, LangError> {
        t.lexeme.parse::<i64>().map_err(|_| {
            let (line, column) = line_col(self.text, t.span.start);
            LangError::Syntax { line, column, expected: "integer within 64 bits".into(), found: t.lexeme.clone() }
        })
    }

    fn method_decl(&mut self) -> Result<MethodBody, LangError> {
        let (name, name_span) = self.ident()?;
        self.method = name.clone();
        self.ordinal = 0;
        self.expect("(")?;
        let mut params = Vec::new();
        if !self.at(")") {
            loop {
                params.push(self.ident()?.0);
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        let open = self.peek().map(|t| t.span.start).unwrap_or(self.text.len());
        let body = self.block()?;
        let end = self.prev_end();
        Ok(MethodBody {
            name: MethodId(name),
            params,
            body,
            span: Span::new(name_span.start, end),
            body_span: Span::new(open, end),
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, LangError> {
        self.expect("{")?;
        let mut stmts = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error_here("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.expect("}")?;
        Ok(stmts)
    }

    fn args(&mut self) -> Result<Vec<Expr>, LangError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.at(")") {
            loop {
                args.push(self.expr(0)?);
                if self.at(",") {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(args)
    }

    fn paren_name(&mut self) -> Result<String, LangError> {
        self.expect("(")?;
        let (name, _) = self.ident()?;
        self.expect(")")?;
        Ok(name)
    }

    fn stmt(&mut self) -> Result<Stmt, LangError> {
        let start = match self.peek() {
            Some(t) => t.span.start,
            None => return Err(self.error_here("statement")),
        };
        self.ordinal += 1;
        let id = StatementId::new(self.method.clone(), self.ordinal);
        let tok = self.peek().unwrap().clone();
        let kind = match tok.lexeme.as_str() {
            "let" if tok.kind == TokenKind::Keyword => {
                self.advance();
                let (name, _) = self.ident()?;
                self.expect("=")?;
                let expr = self.expr(0)?;
                self.expect(";")?;
                StmtKind::Let { name, expr }
            }
            "if" if tok.kind == TokenKind::Keyword => {
                self.advance();
                self.expect("(")?;
                let cond = self.expr(0)?;
                self.expect(")")?;
                let then_branch = self.block()?;
                let else_branch = if self.at("else") {
                    self.advance();
                    if self.at("if") {
                        vec![self.stmt()?]
                    } else {
                        self.block()?
                    }
                } else {
                    Vec::new()
                };
                StmtKind::If { cond, then_branch, else_branch }
            }
            "while" if tok.kind == TokenKind::Keyword => {
                self.advance();
                self.expect("(")?;
                let cond = self.expr(0)?;
                self.expect(")")?;
                if !self.at("bound") {
                    let (line, column) = line_col(self.text, start);
                    return Err(LangError::UnboundedLoop { line, column });
                }
                self.advance();
                let bound = match self.peek() {
                    Some(t) if t.kind == TokenKind::Literal => {
                        let t = self.advance();
                        let v = self.int_value(&t)?;
                        u32::try_from(v).map_err(|_| {
                            let (line, column) = line_col(self.text, t.span.start);
                            LangError::Syntax { line, column, expected: "loop bound below 2^32".into(), found: t.lexeme }
                        })?
                    }
                    _ => return Err(self.error_here("loop bound")),
                };
                let body = self.block()?;
                StmtKind::While { cond, bound, body }
            }
            "lock" if tok.kind == TokenKind::Keyword => {
                self.advance();
                let lock = self.paren_name()?;
                let body = self.block()?;
                StmtKind::Lock { lock, body }
            }
            "wait" | "notify" | "notifyAll" if tok.kind == TokenKind::Keyword => {
                self.advance();
                let cond = self.paren_name()?;
                self.expect(";")?;
                match tok.lexeme.as_str() {
                    "wait" => StmtKind::Wait { cond },
                    "notify" => StmtKind::Notify { cond },
                    _ => StmtKind::NotifyAll { cond },
                }
            }
            "spawn" if tok.kind == TokenKind::Keyword => {
                self.advance();
                let (handle, _) = self.ident()?;
                self.expect("=")?;
                let (method, _) = self.ident()?;
                let args = self.args()?;
                self.expect(";")?;
                StmtKind::Spawn { handle, method: MethodId(method), args }
            }
            "join" if tok.kind == TokenKind::Keyword => {
                self.advance();
                let (handle, _) = self.ident()?;
                self.expect(";")?;
                StmtKind::Join { handle }
            }
            "assert" if tok.kind == TokenKind::Keyword => {
                self.advance();
                self.expect("(")?;
                let cond = self.expr(0)?;
                self.expect(")")?;
                self.expect(";")?;
                StmtKind::Assert { cond }
            }
            "skip" if tok.kind == TokenKind::Keyword => {
                self.advance();
                self.expect(";")?;
                StmtKind::Skip
            }
            _ if tok.kind == TokenKind::Identifier => {
                if self.peek_at(1).is_some_and(|t| t.is("(")) {
                    let (method, _) = self.ident()?;
                    let args = self.args()?;
                    self.expect(";")?;
                    StmtKind::Call { method: MethodId(method), args }
                } else {
                    let (target, _) = self.ident()?;
                    self.expect("=")?;
                    let expr = self.expr(0)?;
                    self.expect(";")?;
                    StmtKind::Assign { target, scope: Scope::Unresolved, expr }
                }
            }
            _ => return Err(self.error_here("statement")),
        };
        Ok(Stmt { id, span: Span::new(start, self.prev_end()), kind })
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let t = self.peek()?;
        if t.kind != TokenKind::Operator {
            return None;
        }
        Some(match t.lexeme.as_str() {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "&&" => BinaryOp::And,
            "||" => BinaryOp::Or,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn expr(&mut self, min_prec: u8) -> Result<Expr, LangError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec <= min_prec {
                break;
            }
            self.advance();
            let rhs = self.expr(prec)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, LangError> {
        if self.at("-") {
            self.advance();
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(self.unary()?)));
        }
        if self.at("!") {
            self.advance();
            return Ok(Expr::Unary(UnaryOp::Not, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, LangError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Literal => {
                let t = self.advance();
                Ok(Expr::Lit(Literal::Int(self.int_value(&t)?)))
            }
            Some(t) if t.is("true") || t.is("false") => {
                let t = self.advance();
                Ok(Expr::Lit(Literal::Bool(t.lexeme == "true")))
            }
            Some(t) if t.kind == TokenKind::Identifier => {
                let (name, span) = self.ident()?;
                Ok(Expr::Var { name, scope: Scope::Unresolved, span })
            }
            Some(t) if t.is("(") => {
                self.advance();
                let e = self.expr(0)?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.error_here("expression")),
        }
    }
}

struct Resolver<'a> {
    text: &'a str,
    globals: HashSet<String>,
    locks: HashSet<String>,
    conds: HashSet<String>,
    arity: HashMap<MethodId, usize>,
}

struct MethodScope {
    locals: HashSet<String>,
    handles: HashSet<String>,
}

impl<'a> Resolver<'a> {
    fn new(text: &'a str, p: &Program) -> Result<Self, LangError> {
        let mut seen: HashSet<&str> = HashSet::new();
        let decls = p
            .globals
            .iter()
            .map(|g| (g.name.as_str(), g.span))
            .chain(p.locks.iter().map(|l| (l.name.as_str(), l.span)))
            .chain(p.conds.iter().map(|c| (c.name.as_str(), c.span)));
        for (name, span) in decls {
            if !seen.insert(name) {
                let (line, column) = line_col(text, span.start);
                return Err(LangError::Syntax { line, column, expected: "unique declaration name".into(), found: name.into() });
            }
        }
        let locks: HashSet<String> = p.locks.iter().map(|l| l.name.clone()).collect();
        for c in &p.conds {
            if !locks.contains(&c.monitor) {
                let (line, column) = line_col(text, c.span.start);
                return Err(LangError::Syntax {
                    line,
                    column,
                    expected: "declared monitor lock".into(),
                    found: c.monitor.clone(),
                });
            }
        }
        match p.methods.get(&p.entry) {
            Some(m) if m.params.is_empty() => {}
            Some(m) => {
                let (line, column) = line_col(text, m.span.start);
                return Err(LangError::Syntax { line, column, expected: "`main()` without parameters".into(), found: "parameters".into() });
            }
            None => {
                let (line, column) = line_col(text, text.len());
                return Err(LangError::Syntax { line, column, expected: "method `main`".into(), found: "end of input".into() });
            }
        }
        Ok(Resolver {
            text,
            globals: p.globals.iter().map(|g| g.name.clone()).collect(),
            locks,
            conds: p.conds.iter().map(|c| c.name.clone()).collect(),
            arity: p.methods.iter().map(|(k, m)| (k.clone(), m.params.len())).collect(),
        })
    }

    fn err(&self, offset: usize, expected: &str, found: &str) -> LangError {
        let (line, column) = line_col(self.text, offset);
        LangError::Syntax { line, column, expected: expected.into(), found: found.into() }
    }

    fn resolve(&self, p: &mut Program) -> Result<(), LangError> {
        for m in p.methods.values_mut() {
            let mut scope = MethodScope { locals: HashSet::new(), handles: HashSet::new() };
            for param in &m.params {
                if self.globals.contains(param) || !scope.locals.insert(param.clone()) {
                    return Err(self.err(m.span.start, "parameter name distinct from globals and other parameters", param));
                }
            }
            self.block(&mut m.body, &mut scope)?;
        }
        Ok(())
    }

    fn block(&self, stmts: &mut [Stmt], scope: &mut MethodScope) -> Result<(), LangError> {
        for s in stmts {
            self.stmt(s, scope)?;
        }
        Ok(())
    }

    fn stmt(&self, s: &mut Stmt, scope: &mut MethodScope) -> Result<(), LangError> {
        let at = s.span.start;
        match &mut s.kind {
            StmtKind::Let { name, expr } => {
                self.expr(expr, scope)?;
                if self.globals.contains(name.as_str()) || scope.handles.contains(name.as_str()) {
                    return Err(self.err(at, "local name distinct from globals and thread handles", name));
                }
                scope.locals.insert(name.clone());
            }
            StmtKind::Assign { target, scope: target_scope, expr } => {
                self.expr(expr, scope)?;
                *target_scope = if scope.locals.contains(target.as_str()) {
                    Scope::Local
                } else if self.globals.contains(target.as_str()) {
                    Scope::Global
                } else {
                    return Err(self.err(at, "declared identifier", target));
                };
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                self.expr(cond, scope)?;
                self.block(then_branch, scope)?;
                self.block(else_branch, scope)?;
            }
            StmtKind::While { cond, body, .. } => {
                self.expr(cond, scope)?;
                self.block(body, scope)?;
            }
            StmtKind::Lock { lock, body } => {
                if !self.locks.contains(lock.as_str()) {
                    return Err(self.err(at, "declared lock", lock));
                }
                self.block(body, scope)?;
            }
            StmtKind::Wait { cond } | StmtKind::Notify { cond } | StmtKind::NotifyAll { cond } => {
                if !self.conds.contains(cond.as_str()) {
                    return Err(self.err(at, "declared condition variable", cond));
                }
            }
            StmtKind::Spawn { handle, method, args } => {
                self.call_target(at, method, args.len())?;
                for a in args.iter_mut() {
                    self.expr(a, scope)?;
                }
                if self.globals.contains(handle.as_str()) || scope.locals.contains(handle.as_str()) {
                    return Err(self.err(at, "thread handle name distinct from variables", handle));
                }
                scope.handles.insert(handle.clone());
            }
            StmtKind::Join { handle } => {
                if !scope.handles.contains(handle.as_str()) {
                    return Err(self.err(at, "thread handle assigned by an earlier spawn", handle));
                }
            }
            StmtKind::Call { method, args } => {
                self.call_target(at, method, args.len())?;
                for a in args.iter_mut() {
                    self.expr(a, scope)?;
                }
            }
            StmtKind::Assert { cond } => self.expr(cond, scope)?,
            StmtKind::Skip => {}
        }
        Ok(())
    }

    fn call_target(&self, at: usize, method: &MethodId, argc: usize) -> Result<(), LangError> {
        match self.arity.get(method) {
            None => Err(self.err(at, "declared method", method.as_str())),
            Some(&n) if n != argc => Err(self.err(at, &format!("{n} argument(s) for `{method}`"), &format!("{argc}"))),
            Some(_) => Ok(()),
        }
    }

    fn expr(&self, e: &mut Expr, scope: &MethodScope) -> Result<(), LangError> {
        match e {
            Expr::Lit(_) => Ok(()),
            Expr::Var { name, scope: s, span } => {
                *s = if scope.locals.contains(name.as_str()) {
                    Scope::Local
                } else if self.globals.contains(name.as_str()) {
                    Scope::Global
                } else {
                    return Err(self.err(span.start, "declared identifier", name));
                };
                Ok(())
            }
            Expr::Unary(_, inner) => self.expr(inner, scope),
            Expr::Binary(_, l, r) => {
                self.expr(l, scope)?;
                self.expr(r, scope)
            }
        }
    }
}

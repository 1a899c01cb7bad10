//! Canonical pretty-printer. `parse(pretty(p))` yields the same statement
//! tree as `p` (spans aside).

use std::fmt::Write;

use super::ast::*;

pub fn pretty(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        let ty = match g.ty {
            ValueType::Int => "int",
            ValueType::Bool => "bool",
        };
        let _ = writeln!(out, "shared {ty} {} = {};", g.name, g.init);
    }
    for l in &p.locks {
        let _ = writeln!(out, "lock {};", l.name);
    }
    for c in &p.conds {
        let _ = writeln!(out, "cond {} on {};", c.name, c.monitor);
    }
    for m in p.methods.values() {
        out.push('\n');
        let _ = writeln!(out, "{}({}) {{", m.name, m.params.join(", "));
        block(&mut out, &m.body, 1);
        out.push_str("}\n");
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        stmt(out, s, depth);
    }
}

fn args(a: &[Expr]) -> String {
    a.iter().map(expr).collect::<Vec<_>>().join(", ")
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Let { name, expr: e } => {
            let _ = writeln!(out, "let {name} = {};", expr(e));
        }
        StmtKind::Assign { target, expr: e, .. } => {
            let _ = writeln!(out, "{target} = {};", expr(e));
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            let _ = writeln!(out, "if ({}) {{", expr(cond));
            block(out, then_branch, depth + 1);
            indent(out, depth);
            if else_branch.is_empty() {
                out.push_str("}\n");
            } else {
                out.push_str("} else {\n");
                block(out, else_branch, depth + 1);
                indent(out, depth);
                out.push_str("}\n");
            }
        }
        StmtKind::While { cond, bound, body } => {
            let _ = writeln!(out, "while ({}) bound {bound} {{", expr(cond));
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::Lock { lock, body } => {
            let _ = writeln!(out, "lock ({lock}) {{");
            block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::Wait { cond } => {
            let _ = writeln!(out, "wait({cond});");
        }
        StmtKind::Notify { cond } => {
            let _ = writeln!(out, "notify({cond});");
        }
        StmtKind::NotifyAll { cond } => {
            let _ = writeln!(out, "notifyAll({cond});");
        }
        StmtKind::Spawn { handle, method, args: a } => {
            let _ = writeln!(out, "spawn {handle} = {method}({});", args(a));
        }
        StmtKind::Join { handle } => {
            let _ = writeln!(out, "join {handle};");
        }
        StmtKind::Call { method, args: a } => {
            let _ = writeln!(out, "{method}({});", args(a));
        }
        StmtKind::Assert { cond } => {
            let _ = writeln!(out, "assert({});", expr(cond));
        }
        StmtKind::Skip => out.push_str("skip;\n"),
    }
}

/// Renders an expression with the minimum parentheses needed to re-parse
/// to the same tree.
pub fn expr(e: &Expr) -> String {
    render(e, 0)
}

fn render(e: &Expr, parent_prec: u8) -> String {
    match e {
        Expr::Lit(Literal::Int(v)) if *v < 0 => format!("({v})"),
        Expr::Lit(l) => l.to_string(),
        Expr::Var { name, .. } => name.clone(),
        Expr::Unary(op, inner) => {
            let sym = match op {
                UnaryOp::Neg => "-",
                UnaryOp::Not => "!",
            };
            format!("{sym}{}", render(inner, 7))
        }
        Expr::Binary(op, l, r) => {
            let prec = op.precedence();
            // Left-associative: the right operand needs parens at equal precedence.
            let text = format!("{} {} {}", render(l, prec - 1), op.symbol(), render(r, prec));
            if prec <= parent_prec {
                format!("({text})")
            } else {
                text
            }
        }
    }
}

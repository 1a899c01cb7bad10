//! MiniConc: a small shared-memory concurrent language.
//!
//! Programs declare shared globals, locks and condition variables, and a set
//! of methods. `main` is the entry thread; `spawn`/`join` manage further
//! threads. The grammar is documented in `docs/minilang.md`.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::*;
pub use lexer::{count_tokens, strip_comments, token_stats, tokenize, Token, TokenKind, TokenStats};
pub use parser::parse;
pub use printer::pretty;

/// Half-open byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LangError {
    #[error("{line}:{column}: illegal input: {message}")]
    Lex { line: usize, column: usize, message: String },
    #[error("{line}:{column}: syntax error: expected {expected}, found `{found}`")]
    Syntax { line: usize, column: usize, expected: String, found: String },
    #[error("{line}:{column}: `while` loop needs a `bound N` annotation")]
    UnboundedLoop { line: usize, column: usize },
    #[error("{line}:{column}: unterminated block comment")]
    UnterminatedComment { line: usize, column: usize },
}

/// 1-based line and column (in characters) of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
    (line, before[line_start..].chars().count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_program() {
        let p = parse("shared int x = 0; main(){ x = x + 1; }").unwrap();
        assert_eq!(p.globals.len(), 1);
        assert_eq!(p.methods.len(), 1);
        let main = &p.methods[&MethodId::new("main")];
        assert_eq!(main.body.len(), 1);
        assert!(matches!(main.body[0].kind, StmtKind::Assign { scope: Scope::Global, .. }));
    }

    #[test]
    fn undeclared_identifier_is_syntax_error() {
        let err = parse("main(){ x = 1; }").unwrap_err();
        match err {
            LangError::Syntax { line, column, expected, .. } => {
                assert_eq!((line, column), (1, 9));
                assert_eq!(expected, "declared identifier");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loop_without_bound_rejected() {
        let err = parse("shared int x = 0; main(){ while (x < 3) { x = x + 1; } }").unwrap_err();
        assert!(matches!(err, LangError::UnboundedLoop { line: 1, column: 27 }));
    }

    #[test]
    fn malformed_input_reports_position() {
        let err = parse("shared int x = 0;\nmain() {\n  x = ;\n}").unwrap_err();
        assert!(matches!(err, LangError::Syntax { line: 3, column: 7, .. }), "{err:?}");
    }

    #[test]
    fn statement_ids_are_preorder() {
        let p = parse(
            "shared int x = 0; lock m;\nmain(){ lock(m) { x = 1; if (x == 1) { skip; } else { x = 2; } } assert(x > 0); }",
        )
        .unwrap();
        let ids: Vec<u32> = p.methods[&MethodId::new("main")].statements().iter().map(|s| s.id.ordinal).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5, 6]);
        let s = p.statement(&StatementId::new("main", 5)).unwrap();
        assert!(matches!(s.kind, StmtKind::Assign { .. }));
        assert_eq!(&p.source_text[s.span.start..s.span.end], "x = 2;");
    }

    #[test]
    fn unknown_spawn_target_and_arity() {
        assert!(parse("main(){ spawn t = nope(); }").is_err());
        assert!(parse("w(a){ skip; } main(){ spawn t = w(); }").is_err());
        assert!(parse("w(a){ skip; } main(){ spawn t = w(1); join t; }").is_ok());
        assert!(parse("main(){ join t; }").is_err());
    }

    #[test]
    fn wait_needs_declared_cond_and_monitor() {
        assert!(parse("lock m; main(){ wait(c); }").is_err());
        assert!(parse("cond c on m; main(){ skip; }").is_err());
        assert!(parse("lock m; cond c on m; main(){ lock(m) { wait(c); } }").is_ok());
    }

    #[test]
    fn line_col_counts_characters() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("", 0), (1, 1));
    }
}

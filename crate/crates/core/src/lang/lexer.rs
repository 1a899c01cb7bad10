//! Tokenizer for MiniConc source text.
//!
//! Whitespace is not a token; every other byte of the input belongs to
//! exactly one token, so the gaps between token spans are pure whitespace.

use serde::Serialize;

use super::{LangError, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    Literal,
    Operator,
    Punctuation,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
}

impl Token {
    pub fn is(&self, lexeme: &str) -> bool {
        self.kind != TokenKind::Comment && self.lexeme == lexeme
    }
}

pub const KEYWORDS: &[&str] = &[
    "shared", "int", "bool", "lock", "cond", "on", "let", "if", "else", "while", "bound", "wait",
    "notify", "notifyAll", "spawn", "join", "assert", "skip", "true", "false",
];

const TWO_CHAR_OPS: &[&str] = &["==", "!=", "<=", ">=", "&&", "||"];
const ONE_CHAR_OPS: &[char] = &['+', '-', '*', '/', '%', '<', '>', '=', '!'];
const PUNCT: &[char] = &['(', ')', '{', '}', ';', ','];

/// Token counts of a source text. Comments are reported separately and never
/// contribute to `code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TokenStats {
    pub code: usize,
    pub comments: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, LangError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let kind;
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            kind = TokenKind::Comment;
        } else if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    let (line, column) = super::line_col(text, start);
                    return Err(LangError::UnterminatedComment { line, column });
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
            kind = TokenKind::Comment;
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            kind = if KEYWORDS.contains(&&text[start..i]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
                let (line, column) = super::line_col(text, i);
                return Err(LangError::Lex {
                    line,
                    column,
                    message: "identifier may not start with a digit".into(),
                });
            }
            kind = TokenKind::Literal;
        } else if i + 1 < bytes.len() && TWO_CHAR_OPS.contains(&&text[i..i + 2]) {
            i += 2;
            kind = TokenKind::Operator;
        } else if ONE_CHAR_OPS.contains(&(c as char)) {
            i += 1;
            kind = TokenKind::Operator;
        } else if PUNCT.contains(&(c as char)) {
            i += 1;
            kind = TokenKind::Punctuation;
        } else {
            let (line, column) = super::line_col(text, i);
            let ch = text[i..].chars().next().unwrap_or('?');
            return Err(LangError::Lex {
                line,
                column,
                message: format!("illegal character {ch:?}"),
            });
        }
        tokens.push(Token {
            kind,
            lexeme: text[start..i].to_string(),
            span: Span::new(start, i),
        });
    }
    Ok(tokens)
}

/// Number of non-comment tokens in `text`.
pub fn count_tokens(text: &str) -> Result<usize, LangError> {
    token_stats(text).map(|s| s.code)
}

pub fn token_stats(text: &str) -> Result<TokenStats, LangError> {
    let mut stats = TokenStats::default();
    for t in tokenize(text)? {
        if t.kind == TokenKind::Comment {
            stats.comments += 1;
        } else {
            stats.code += 1;
        }
    }
    Ok(stats)
}

/// Removes `//` and `/* */` comments. A block comment sitting directly
/// between two tokens is replaced by one space so the tokens stay separate.
pub fn strip_comments(text: &str) -> Result<String, LangError> {
    let tokens = tokenize(text)?;
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for t in tokens.iter().filter(|t| t.kind == TokenKind::Comment) {
        out.push_str(&text[cursor..t.span.start]);
        cursor = t.span.end;
        let glued_before = out.chars().last().is_some_and(|c| !c.is_whitespace());
        let glued_after = text[cursor..].chars().next().is_some_and(|c| !c.is_whitespace());
        if glued_before && glued_after {
            out.push(' ');
        }
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

//! Human-readable bug reports built from detection results.

use std::fmt::Write;

use serde::Serialize;

use crate::lang::{Program, Span, StatementId};

use super::search::{DetectionResult, ThreadSnapshot};
use super::trace::{Trace, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BugReport {
    pub verdict: Verdict,
    pub symptom: String,
    /// Source span of the failing statement, when there is one.
    pub span: Option<Span>,
    pub line: Option<usize>,
    pub threads: Vec<ThreadSnapshot>,
    pub trace: Trace,
}

/// First line of a statement's source text.
pub fn statement_text(p: &Program, id: &StatementId) -> String {
    match p.statement(id) {
        Some(s) => {
            let text = &p.source_text[s.span.start..s.span.end];
            text.lines().next().unwrap_or("").trim().to_string()
        }
        None => id.to_string(),
    }
}

impl BugReport {
    /// `None` when the result is not a failure.
    pub fn from_result(p: &Program, r: &DetectionResult) -> Option<Self> {
        let (symptom, span) = match r.verdict {
            Verdict::NoBugFound => return None,
            Verdict::AssertionFailure => {
                let f = r.fault.as_ref().expect("assertion verdict carries a fault");
                let span = p.statement(&f.stmt).map(|s| s.span);
                let text = statement_text(p, &f.stmt);
                (format!("{:?} in thread {} at `{text}` in method {}: {}", f.kind, f.thread, f.stmt.method, f.message), span)
            }
            Verdict::Deadlock => {
                let parts: Vec<String> = r
                    .blocked()
                    .iter()
                    .map(|t| {
                        let mut s = format!("thread {} {}", t.thread, t.status);
                        if !t.holding.is_empty() {
                            let _ = write!(s, " while holding {}", t.holding.iter().map(|h| format!("`{h}`")).collect::<Vec<_>>().join(", "));
                        }
                        s
                    })
                    .collect();
                (format!("deadlock: {}", parts.join("; ")), None)
            }
        };
        Some(BugReport {
            verdict: r.verdict,
            symptom,
            line: span.map(|s| p.line_of(s.start)),
            span,
            threads: r.threads.clone(),
            trace: r.trace.clone(),
        })
    }

    /// Plain-text rendering used in prompts and on the console.
    pub fn render(&self, p: &Program) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Verdict: {}", self.verdict);
        let _ = writeln!(out, "Symptom: {}", self.symptom);
        let _ = writeln!(out, "Threads at the failure:");
        for t in &self.threads {
            let stack: Vec<String> = t
                .stack
                .iter()
                .map(|s| format!("{} `{}`", s.method, statement_text(p, s)))
                .collect();
            let _ = write!(out, "  thread {}: {}", t.thread, t.status);
            if !t.holding.is_empty() {
                let _ = write!(out, ", holding {}", t.holding.join(", "));
            }
            if !stack.is_empty() {
                let _ = write!(out, "; at {}", stack.join(" > "));
            }
            out.push('\n');
        }
        let _ = writeln!(out, "Failing schedule: {:?}", self.trace.schedule);
        out
    }
}

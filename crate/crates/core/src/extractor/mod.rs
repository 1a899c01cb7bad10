//! Staged context extraction. Each stage shrinks the program text shown to
//! the repair model: comments go first, then methods unreachable from
//! `main`, then methods outside the marked set. Omitted methods keep their
//! signature and get a placeholder comment as body.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::mark_methods;
use crate::graphs::{build_call_graph, GraphError};
use crate::lang::{parse, strip_comments, token_stats, LangError, MethodId, Program, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterStage {
    #[serde(rename = "p1")]
    Original,
    #[serde(rename = "p2")]
    CommentStripped,
    #[serde(rename = "p3")]
    CallGraphFiltered,
    #[serde(rename = "p4")]
    ShbFiltered,
}

impl FilterStage {
    pub const ALL: [FilterStage; 4] = [
        FilterStage::Original,
        FilterStage::CommentStripped,
        FilterStage::CallGraphFiltered,
        FilterStage::ShbFiltered,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FilterStage::Original => "p1",
            FilterStage::CommentStripped => "p2",
            FilterStage::CallGraphFiltered => "p3",
            FilterStage::ShbFiltered => "p4",
        }
    }
}

impl fmt::Display for FilterStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FilterStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FilterStage::ALL
            .into_iter()
            .find(|st| st.label() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown stage `{s}` (expected p1, p2, p3 or p4)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Omission {
    pub method: MethodId,
    /// Span of the placeholder comment in the filtered text.
    pub placeholder: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilteredSource {
    pub stage: FilterStage,
    pub text: String,
    pub omitted: Vec<Omission>,
    pub token_count: usize,
    /// `1 - tokens(this) / tokens(previous stage)`; absent for the first stage.
    pub tokens_filtered_ratio: Option<f64>,
}

impl FilteredSource {
    pub fn omitted_methods(&self) -> BTreeSet<MethodId> {
        self.omitted.iter().map(|o| o.method.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Lang(#[from] LangError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn placeholder(method: &MethodId) -> String {
    format!("/* method {method} omitted: unrelated to concurrency bugs */")
}

/// Replaces the bodies of `omit` in `text` (which must parse to `prog`) by
/// placeholders. Empty bodies are left alone; a placeholder would only add a
/// token.
fn omit_methods(text: &str, prog: &Program, omit: &BTreeSet<MethodId>) -> (String, Vec<Omission>) {
    let mut bodies: Vec<(&MethodId, Span)> = prog
        .methods
        .values()
        .filter(|m| omit.contains(&m.name) && !m.body.is_empty())
        .map(|m| (&m.name, m.body_span))
        .collect();
    bodies.sort_by_key(|(_, s)| s.start);
    let mut out = String::with_capacity(text.len());
    let mut omitted = Vec::new();
    let mut at = 0;
    for (name, span) in bodies {
        out.push_str(&text[at..span.start]);
        out.push_str("{ ");
        let start = out.len();
        out.push_str(&placeholder(name));
        omitted.push(Omission { method: name.clone(), placeholder: Span::new(start, out.len()) });
        out.push_str(" }");
        at = span.end;
    }
    out.push_str(&text[at..]);
    omitted.sort_by(|a, b| a.method.cmp(&b.method));
    (out, omitted)
}

fn ratio(tokens: usize, previous: usize) -> Option<f64> {
    (previous > 0).then(|| 1.0 - tokens as f64 / previous as f64)
}

/// Stage size in lexer tokens, comments included, so that stripping them
/// shows up in the ratio.
pub fn stage_tokens(text: &str) -> Result<usize, LangError> {
    token_stats(text).map(|s| s.code + s.comments)
}

fn finish(stage: FilterStage, text: String, omitted: Vec<Omission>, previous: Option<usize>) -> Result<FilteredSource, ExtractError> {
    let token_count = stage_tokens(&text)?;
    Ok(FilteredSource {
        stage,
        tokens_filtered_ratio: previous.and_then(|prev| ratio(token_count, prev)),
        text,
        omitted,
        token_count,
    })
}

/// All four stages in order.
pub fn extract_all(p: &Program) -> Result<Vec<FilteredSource>, ExtractError> {
    let p1 = finish(FilterStage::Original, p.source_text.clone(), Vec::new(), None)?;
    let stripped = strip_comments(&p.source_text)?;
    let p2 = finish(FilterStage::CommentStripped, stripped, Vec::new(), Some(p1.token_count))?;
    let q = parse(&p2.text)?;
    let cg = build_call_graph(&q);
    let (text, omitted) = omit_methods(&p2.text, &q, &cg.unreachable);
    let p3 = finish(FilterStage::CallGraphFiltered, text, omitted, Some(p2.token_count))?;
    let marks = mark_methods(&q)?;
    // Each stage filters at least what the previous one did.
    let drop: BTreeSet<MethodId> =
        q.methods.keys().filter(|m| !marks.contains(m) || cg.unreachable.contains(*m)).cloned().collect();
    let (text, omitted) = omit_methods(&p2.text, &q, &drop);
    let p4 = finish(FilterStage::ShbFiltered, text, omitted, Some(p3.token_count))?;
    Ok(vec![p1, p2, p3, p4])
}

pub fn extract(p: &Program, stage: FilterStage) -> Result<FilteredSource, ExtractError> {
    let mut all = extract_all(p)?;
    let i = FilterStage::ALL.iter().position(|s| *s == stage).expect("known stage");
    Ok(all.swap_remove(i))
}

/// Comment-stripped text keeping exactly the methods in `keep`, for
/// comparing against a hand-picked method set. The ratio is relative to the
/// comment-stripped stage.
pub fn extract_ideal(p: &Program, keep: &BTreeSet<MethodId>) -> Result<FilteredSource, ExtractError> {
    let stripped = strip_comments(&p.source_text)?;
    let base = stage_tokens(&stripped)?;
    let q = parse(&stripped)?;
    let drop: BTreeSet<MethodId> = q.methods.keys().filter(|m| !keep.contains(m)).cloned().collect();
    let (text, omitted) = omit_methods(&stripped, &q, &drop);
    finish(FilterStage::ShbFiltered, text, omitted, Some(base))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageMetrics {
    pub stage: FilterStage,
    pub tokens: usize,
    pub ratio: Option<f64>,
    pub omitted: Vec<MethodId>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stages: Vec<StageMetrics>,
}

impl StageReport {
    pub fn tokens(&self, stage: FilterStage) -> usize {
        self.stages.iter().find(|s| s.stage == stage).map(|s| s.tokens).unwrap_or(0)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

pub fn stage_report(p: &Program) -> Result<StageReport, ExtractError> {
    Ok(StageReport {
        stages: extract_all(p)?
            .into_iter()
            .map(|f| StageMetrics {
                stage: f.stage,
                tokens: f.token_count,
                ratio: f.tokens_filtered_ratio,
                omitted: f.omitted.into_iter().map(|o| o.method).collect(),
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "// counter demo
shared int x = 0;
/* unused */
helper(a) {
    let b = a * 2;
}
w() {
    x = x + 1; // racy
}
main() {
    spawn t = w();
    spawn u = w();
    join t;
    join u;
}
";

    #[test]
    fn stages_shrink_monotonically() {
        let p = parse(SRC).unwrap();
        let all = extract_all(&p).unwrap();
        let counts: Vec<usize> = all.iter().map(|f| f.token_count).collect();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        assert_eq!(all[0].text, SRC);
        assert_eq!(all[2].omitted_methods(), BTreeSet::from([MethodId::new("helper")]));
        for f in &all {
            let q = parse(&f.text).unwrap();
            assert_eq!(q.methods.len(), 3);
        }
    }

    #[test]
    fn placeholder_format_and_signature() {
        let p = parse(SRC).unwrap();
        let p3 = extract(&p, FilterStage::CallGraphFiltered).unwrap();
        assert!(p3.text.contains("helper(a) { /* method helper omitted: unrelated to concurrency bugs */ }"), "{}", p3.text);
        let o = &p3.omitted[0];
        assert_eq!(&p3.text[o.placeholder.start..o.placeholder.end], placeholder(&MethodId::new("helper")));
    }

    #[test]
    fn ratio_formula() {
        let p = parse(SRC).unwrap();
        let all = extract_all(&p).unwrap();
        assert_eq!(all[0].tokens_filtered_ratio, None);
        let r = all[2].tokens_filtered_ratio.unwrap();
        let expect = 1.0 - all[2].token_count as f64 / all[1].token_count as f64;
        assert!((r - expect).abs() < 1e-12);
        // Three comments go at p2; the code tokens stay.
        assert_eq!(all[0].token_count, all[1].token_count + 3);
        let r = all[1].tokens_filtered_ratio.unwrap();
        assert!((r - 3.0 / all[0].token_count as f64).abs() < 1e-12);
    }

    #[test]
    fn empty_bodies_are_not_replaced() {
        let src = "shared int x = 0;\nidle() { }\nmain() { x = 1; }\n";
        let p = parse(src).unwrap();
        let p4 = extract(&p, FilterStage::ShbFiltered).unwrap();
        assert!(!p4.omitted_methods().contains(&MethodId::new("idle")));
        assert!(p4.text.contains("idle() { }"));
    }

    #[test]
    fn identity_when_everything_is_kept() {
        let src = "shared int x = 0;\nw() { x = 1; }\nmain() { spawn t = w(); x = 2; }\n";
        let p = parse(src).unwrap();
        assert_eq!(extract(&p, FilterStage::ShbFiltered).unwrap().text, src);
    }

    #[test]
    fn ideal_keep_list() {
        let p = parse(SRC).unwrap();
        let f = extract_ideal(&p, &BTreeSet::from([MethodId::new("w")])).unwrap();
        assert_eq!(f.omitted_methods(), BTreeSet::from([MethodId::new("helper"), MethodId::new("main")]));
    }

    #[test]
    fn stage_names_parse() {
        assert_eq!("p3".parse::<FilterStage>().unwrap(), FilterStage::CallGraphFiltered);
        assert!("p9".parse::<FilterStage>().is_err());
    }
}

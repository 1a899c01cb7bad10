//! SEARCH/REPLACE edit blocks: parsing from model output and application to
//! source text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SEARCH_MARK: &str = "<<<<<<< SEARCH";
pub const DIVIDER: &str = "=======";
pub const REPLACE_MARK: &str = ">>>>>>> REPLACE";

/// Marker that identifies an omitted-method placeholder.
const PLACEHOLDER_TAIL: &str = "omitted: unrelated to concurrency bugs";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub file: String,
    pub search: Vec<String>,
    pub replace: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSet {
    pub edits: Vec<Edit>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("no SEARCH/REPLACE block found in the response")]
    NoPatchFound,
    #[error("malformed edit block at line {line}: {reason}")]
    MalformedBlock { line: usize, reason: String },
    #[error("edit {edit}: the SEARCH section matches {matches} places; it must match exactly one")]
    AmbiguousSearch { edit: usize, matches: usize },
    #[error("edit {edit}: the SEARCH section does not match the code")]
    SearchNotFound { edit: usize },
    #[error("edit {edit} overlaps lines changed by an earlier edit")]
    OverlappingEdits { edit: usize },
    #[error("edit {edit} modifies an omitted method ({method}), which is not allowed")]
    PolicyViolation { edit: usize, method: String },
    #[error("the patched program does not parse: {0}")]
    PostPatchSyntaxError(String),
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Extracts every edit block. Prose and code fences around blocks are
/// ignored; each block must be preceded by a `file:` line.
pub fn parse_patches(response: &str) -> Result<PatchSet, PatchError> {
    let lines: Vec<&str> = response.lines().map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    let mut edits = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim() != SEARCH_MARK {
            if matches!(lines[i].trim(), DIVIDER | REPLACE_MARK) {
                return Err(PatchError::MalformedBlock { line: i + 1, reason: format!("`{}` outside a block", lines[i].trim()) });
            }
            i += 1;
            continue;
        }
        let start = i;
        let file = lines[..start]
            .iter()
            .rev()
            .find(|l| !l.trim().is_empty() && !is_fence(l))
            .and_then(|l| l.trim().strip_prefix("file:"))
            .map(|f| f.trim().trim_matches('`').to_string())
            .ok_or_else(|| PatchError::MalformedBlock { line: start + 1, reason: "missing `file:` line before the block".into() })?;
        let mut search = Vec::new();
        i += 1;
        loop {
            match lines.get(i) {
                None => return Err(PatchError::MalformedBlock { line: start + 1, reason: "no divider".into() }),
                Some(l) if l.trim() == DIVIDER => break,
                Some(l) if l.trim() == SEARCH_MARK || l.trim() == REPLACE_MARK => {
                    return Err(PatchError::MalformedBlock { line: i + 1, reason: "expected divider".into() })
                }
                Some(l) => search.push(l.to_string()),
            }
            i += 1;
        }
        let mut replace = Vec::new();
        i += 1;
        loop {
            match lines.get(i) {
                None => return Err(PatchError::MalformedBlock { line: start + 1, reason: "no end marker".into() }),
                Some(l) if l.trim() == REPLACE_MARK => break,
                Some(l) if l.trim() == SEARCH_MARK || l.trim() == DIVIDER => {
                    return Err(PatchError::MalformedBlock { line: i + 1, reason: "expected end marker".into() })
                }
                Some(l) => replace.push(l.to_string()),
            }
            i += 1;
        }
        if search.iter().all(|l| l.trim().is_empty()) {
            return Err(PatchError::MalformedBlock { line: start + 1, reason: "empty SEARCH section".into() });
        }
        edits.push(Edit { file, search, replace });
        i += 1;
    }
    if edits.is_empty() {
        return Err(PatchError::NoPatchFound);
    }
    Ok(PatchSet { edits })
}

/// A run of lines (1-based, inclusive) that edits must not touch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Protected {
    pub method: String,
    pub first_line: usize,
    pub last_line: usize,
}

#[derive(Clone)]
struct Line {
    text: String,
    guard: Option<usize>,
    edited: bool,
}

/// Applies the edits in order; each later edit is matched against the text
/// produced by the earlier ones. Lines compare with trailing whitespace
/// ignored.
pub fn apply_patches(src: &str, ps: &PatchSet, protected: &[Protected]) -> Result<String, PatchError> {
    let mut lines: Vec<Line> = src
        .split('\n')
        .enumerate()
        .map(|(i, t)| Line {
            text: t.to_string(),
            guard: protected.iter().position(|p| (p.first_line..=p.last_line).contains(&(i + 1))),
            edited: false,
        })
        .collect();
    for (k, edit) in ps.edits.iter().enumerate() {
        let edit_no = k + 1;
        if let Some(line) = edit.search.iter().chain(&edit.replace).find(|l| l.contains(PLACEHOLDER_TAIL)) {
            let method = line
                .split("/* method ")
                .nth(1)
                .and_then(|rest| rest.split_whitespace().next())
                .unwrap_or("?")
                .to_string();
            return Err(PatchError::PolicyViolation { edit: edit_no, method });
        }
        let n = edit.search.len();
        let matches: Vec<usize> = (0..=lines.len().saturating_sub(n))
            .filter(|&at| n <= lines.len() && (0..n).all(|j| lines[at + j].text.trim_end() == edit.search[j].trim_end()))
            .collect();
        let at = match matches.as_slice() {
            [] => return Err(PatchError::SearchNotFound { edit: edit_no }),
            [one] => *one,
            many => return Err(PatchError::AmbiguousSearch { edit: edit_no, matches: many.len() }),
        };
        let hit = &lines[at..at + n];
        if let Some(g) = hit.iter().find_map(|l| l.guard) {
            return Err(PatchError::PolicyViolation { edit: edit_no, method: protected[g].method.clone() });
        }
        if hit.iter().any(|l| l.edited) {
            return Err(PatchError::OverlappingEdits { edit: edit_no });
        }
        let new: Vec<Line> = edit.replace.iter().map(|t| Line { text: t.clone(), guard: None, edited: true }).collect();
        lines.splice(at..at + n, new);
    }
    Ok(lines.into_iter().map(|l| l.text).collect::<Vec<_>>().join("\n"))
}

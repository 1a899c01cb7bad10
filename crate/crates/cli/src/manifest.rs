//! Per-program expectation files (`<name>.expect.json`) in a corpus.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use confx_core::explorer::{Value, Verdict};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugType {
    DataRace,
    AtomicityViolation,
    OrderViolation,
    ResourceDeadlock,
    CommunicationDeadlock,
    None,
}

impl fmt::Display for BugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BugType::DataRace => "data race",
            BugType::AtomicityViolation => "atomicity",
            BugType::OrderViolation => "order",
            BugType::ResourceDeadlock => "resource dl",
            BugType::CommunicationDeadlock => "comm. dl",
            BugType::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub bug_type: BugType,
    pub expected_verdict: Verdict,
    /// Methods whose bodies the reference patch changes.
    #[serde(default)]
    pub reference_methods: Vec<String>,
    /// Scripted model responses, relative to the manifest.
    #[serde(default)]
    pub mock: Option<String>,
    /// Final global values required by the functional check.
    #[serde(default)]
    pub expect_globals: BTreeMap<String, Value>,
    /// Outcome the mock fixture should produce: fixed, exhausted or failed.
    #[serde(default)]
    pub expected_outcome: Option<String>,
    #[serde(default)]
    pub expected_iter: Option<usize>,
    #[serde(default)]
    pub expected_locks_added: Option<usize>,
}

impl Manifest {
    pub fn load(path: &Path) -> anyhow::Result<Manifest> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
    }

    /// `foo.expect.json` next to `foo.mc`, if present.
    pub fn for_program(program: &Path) -> anyhow::Result<Option<Manifest>> {
        let path = manifest_path(program);
        if path.exists() {
            Manifest::load(&path).map(Some)
        } else {
            Ok(None)
        }
    }
}

pub fn manifest_path(program: &Path) -> PathBuf {
    let stem = program.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    program.with_file_name(format!("{stem}.expect.json"))
}

/// Buggy-or-benign programs of a corpus directory, sorted by name. Reference
/// versions (`*.fixed.mc`) are skipped.
pub fn corpus_programs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            name.ends_with(".mc") && !name.ends_with(".fixed.mc")
        })
        .collect();
    out.sort();
    Ok(out)
}

//! Execution traces and their JSON form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graphs::AccessOp;
use crate::lang::StatementId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    NoBugFound,
    AssertionFailure,
    Deadlock,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        self != Verdict::NoBugFound
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::NoBugFound => "NoBugFound",
            Verdict::AssertionFailure => "AssertionFailure",
            Verdict::Deadlock => "Deadlock",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
    #[serde(rename = "lock")]
    Lock,
    #[serde(rename = "unlock")]
    Unlock,
    #[serde(rename = "wait")]
    Wait,
    /// A notified waiter got its monitor back.
    #[serde(rename = "wake")]
    Wake,
    #[serde(rename = "notify")]
    Notify,
    #[serde(rename = "notifyAll")]
    NotifyAll,
    #[serde(rename = "spawn")]
    Spawn,
    #[serde(rename = "join")]
    Join,
    #[serde(rename = "fail")]
    Fail,
}

impl TraceKind {
    pub fn access(self) -> Option<AccessOp> {
        match self {
            TraceKind::Read => Some(AccessOp::Read),
            TraceKind::Write => Some(AccessOp::Write),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Dynamic thread id; `main` is 0, later threads are numbered in
    /// creation order.
    pub thread: usize,
    pub stmt: StatementId,
    pub kind: TraceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loc: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub verdict: Verdict,
    pub schedule: Vec<usize>,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

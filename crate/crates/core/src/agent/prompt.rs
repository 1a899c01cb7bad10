//! Prompt construction for the repair model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgentError;

pub const PRELUDE: &str = "You are given a code snippet that may contain concurrency bugs, along with a bug report detected by the confx explorer. Some methods unrelated to the bugs have already been filtered out.";

pub const INSTRUCTIONS: &str = "Please fix the concurrency bug.\nPlease note that some methods have been omitted. These methods are unrelated to concurrency bugs; performing any modifications to them would be considered violations. Please ensure that fixing doesn't introduce new bugs, such as deadlocks. Do not attempt to change the functionality of any function, and do not modify any code that is unrelated to concurrency bugs.";

pub const DIRECT_QUESTION: &str = "Does this concurrent program have any concurrency bugs? If yes, please fix them.";

pub const LOCALIZATION_DESCRIPTION: &str = "You were given a program source code that may contain concurrency bugs.";

pub const LOCALIZATION_FORMAT: &str = "Describe the bug using exactly this format:\nBug Type: <type of the bug detected>\nBug Description: <a detailed description of the bug>\nBug Location: <file name and line number>";

pub const FEEDBACK_PREFIX: &str = "Your patch introduced an error.\nPlease review the report below and revise your fix accordingly.\nThe error report is as follows: ";

pub const FORMAT_GUIDANCE: &str = "Answer with one or more SEARCH/REPLACE edits. Start each edit with a line `file: <path>`, followed by:\n<<<<<<< SEARCH\n<lines copied exactly from the code above>\n=======\n<the new lines>\n>>>>>>> REPLACE\nEach SEARCH section must match exactly one run of whole lines in the code, indentation included. Use separate edits for changes in separate places.";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    #[default]
    OneStep,
    TwoStep,
    Direct,
    NoBugInfo,
}

impl PromptStrategy {
    pub fn label(self) -> &'static str {
        match self {
            PromptStrategy::OneStep => "one_step",
            PromptStrategy::TwoStep => "two_step",
            PromptStrategy::Direct => "direct",
            PromptStrategy::NoBugInfo => "no_bug_info",
        }
    }

    pub fn needs_report(self) -> bool {
        !matches!(self, PromptStrategy::NoBugInfo)
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [PromptStrategy::OneStep, PromptStrategy::TwoStep, PromptStrategy::Direct, PromptStrategy::NoBugInfo]
            .into_iter()
            .find(|st| st.label() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown strategy `{s}` (expected one_step, two_step, direct or no_bug_info)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptPart {
    Prelude,
    Question,
    Description,
    Code,
    BugReport,
    Localization,
    Instructions,
    FormatGuidance,
    ReportFormat,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub parts: Vec<(PromptPart, String)>,
}

impl Prompt {
    pub fn kinds(&self) -> Vec<PromptPart> {
        self.parts.iter().map(|(k, _)| *k).collect()
    }

    pub fn part(&self, kind: PromptPart) -> Option<&str> {
        self.parts.iter().find(|(k, _)| *k == kind).map(|(_, t)| t.as_str())
    }

    /// Parts joined by blank lines.
    pub fn render(&self) -> String {
        self.parts.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

/// Program text as shown to the model.
#[derive(Debug, Clone, Copy)]
pub struct CodeView<'a> {
    pub file: &'a str,
    pub text: &'a str,
}

fn code_part(code: CodeView<'_>) -> String {
    let body = code.text.strip_suffix('\n').unwrap_or(code.text);
    format!("file: {}\n```\n{}\n```", code.file, body)
}

fn report_part(report: &str) -> String {
    format!("Bug report:\n{}", report.trim_end())
}

/// First prompt of a session. For [`PromptStrategy::TwoStep`] this is the
/// localization request; the repair request that follows it is built by
/// [`build_repair_after_localization`].
pub fn build_prompt1(code: CodeView<'_>, report: Option<&str>, strategy: PromptStrategy) -> Result<Prompt, AgentError> {
    let report = match (strategy.needs_report(), report) {
        (true, None) => return Err(AgentError::MissingReport(strategy)),
        (true, Some(r)) => Some(report_part(r)),
        (false, _) => None,
    };
    let mut parts = Vec::new();
    match strategy {
        PromptStrategy::OneStep | PromptStrategy::NoBugInfo => {
            parts.push((PromptPart::Prelude, PRELUDE.to_string()));
            parts.push((PromptPart::Code, code_part(code)));
            if let Some(r) = report {
                parts.push((PromptPart::BugReport, r));
            }
            parts.push((PromptPart::Instructions, INSTRUCTIONS.to_string()));
            parts.push((PromptPart::FormatGuidance, FORMAT_GUIDANCE.to_string()));
        }
        PromptStrategy::Direct => {
            parts.push((PromptPart::Question, DIRECT_QUESTION.to_string()));
            parts.push((PromptPart::Code, code_part(code)));
            parts.push((PromptPart::BugReport, report.expect("direct needs a report")));
            parts.push((PromptPart::FormatGuidance, FORMAT_GUIDANCE.to_string()));
        }
        PromptStrategy::TwoStep => {
            parts.push((PromptPart::Description, LOCALIZATION_DESCRIPTION.to_string()));
            parts.push((PromptPart::Code, code_part(code)));
            parts.push((PromptPart::BugReport, report.expect("two-step needs a report")));
            parts.push((PromptPart::ReportFormat, LOCALIZATION_FORMAT.to_string()));
        }
    }
    Ok(Prompt { parts })
}

/// Repair request of the two-step strategy: the one-step layout with the
/// model's own localization in place of the detector report.
pub fn build_repair_after_localization(code: CodeView<'_>, localization: &str) -> Prompt {
    Prompt {
        parts: vec![
            (PromptPart::Prelude, PRELUDE.to_string()),
            (PromptPart::Code, code_part(code)),
            (PromptPart::Localization, format!("Bug localization:\n{}", localization.trim_end())),
            (PromptPart::Instructions, INSTRUCTIONS.to_string()),
            (PromptPart::FormatGuidance, FORMAT_GUIDANCE.to_string()),
        ],
    }
}

/// Feedback prompt after a failed attempt.
pub fn build_prompt2(error: &str) -> Prompt {
    Prompt { parts: vec![(PromptPart::Feedback, format!("{FEEDBACK_PREFIX}{error}"))] }
}

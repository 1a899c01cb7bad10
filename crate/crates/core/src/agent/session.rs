//! The detect, prompt, patch and validate loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::count_locks_added;
use crate::explorer::{explore, run_random, BugReport, ExploreOptions, Value, Verdict, DEFAULT_RUNS};
use crate::extractor::{extract, FilterStage};
use crate::lang::{parse, strip_comments, Program};

use super::client::{ChatMessage, ChatRequest, LlmClient, LlmError};
use super::patch::{apply_patches, parse_patches, PatchError, Protected};
use super::prompt::{build_prompt1, build_prompt2, build_repair_after_localization, CodeView, Prompt, PromptStrategy};
use super::AgentError;

pub const DEFAULT_MAX_ATTEMPTS: usize = 5;
pub const DEFAULT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_TOP_P: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RepairConfig {
    pub strategy: PromptStrategy,
    pub stage: FilterStage,
    pub max_attempts: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub runs: usize,
    pub seed: u64,
    pub depth_bound: usize,
    /// Extra tries per model call after a transport failure.
    pub transport_retries: usize,
    /// File name shown to the model next to the code.
    pub file_name: String,
    /// Global values every terminating schedule of the patched program must
    /// produce. Stands in for a per-program functional test suite.
    pub expect_globals: BTreeMap<String, Value>,
}

impl Default for RepairConfig {
    fn default() -> Self {
        RepairConfig {
            strategy: PromptStrategy::OneStep,
            stage: FilterStage::ShbFiltered,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            temperature: DEFAULT_TEMPERATURE,
            top_p: DEFAULT_TOP_P,
            runs: DEFAULT_RUNS,
            seed: 0,
            depth_bound: ExploreOptions::default().depth_bound,
            transport_retries: 2,
            file_name: "program.mc".into(),
            expect_globals: BTreeMap::new(),
        }
    }
}

impl RepairConfig {
    fn explore_options(&self) -> ExploreOptions {
        ExploreOptions { depth_bound: self.depth_bound }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStage {
    Patch,
    Syntax,
    Explore,
    Random,
    Functional,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationFailure {
    pub stage: ValidationStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum AttemptVerdict {
    Accepted,
    Rejected { stage: ValidationStage, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub prompt: String,
    pub response: String,
    pub verdict: AttemptVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LocalizationRecord {
    pub prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionOutcome {
    Fixed,
    Failed { reason: String },
    ExhaustedAttempts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepairSession {
    pub file: String,
    pub client: String,
    pub strategy: PromptStrategy,
    pub stage: FilterStage,
    pub temperature: f64,
    pub top_p: f64,
    pub max_attempts: usize,
    pub seed: u64,
    pub detected: Verdict,
    pub localization: Option<LocalizationRecord>,
    pub history: Vec<AttemptRecord>,
    pub outcome: SessionOutcome,
    /// Number of repair attempts made.
    pub iter: usize,
    pub locks_added: Option<usize>,
    pub patched_source: Option<String>,
}

impl RepairSession {
    pub fn is_fixed(&self) -> bool {
        self.outcome == SessionOutcome::Fixed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }
}

/// Line ranges of omitted method bodies inside `base`, the text patches are
/// applied to.
fn protected_lines(base: &str, omitted: &[String]) -> Result<Vec<Protected>, AgentError> {
    let q = parse(base)?;
    Ok(omitted
        .iter()
        .filter_map(|m| q.methods.values().find(|b| b.name.as_str() == m))
        .map(|b| Protected {
            method: b.name.to_string(),
            first_line: q.line_of(b.body_span.start),
            last_line: q.line_of(b.body_span.end.saturating_sub(1)),
        })
        .collect())
}

fn signature(p: &Program) -> Vec<(String, Vec<String>)> {
    p.methods.values().map(|m| (m.name.to_string(), m.params.clone())).collect()
}

/// Validation of a patched program, in order: re-parse, exhaustive
/// exploration, seeded random runs, then the functional check.
pub fn validate(original: &Program, patched: &str, cfg: &RepairConfig) -> Result<Program, ValidationFailure> {
    let fail = |stage, message: String| ValidationFailure { stage, message };
    let q = parse(patched).map_err(|e| fail(ValidationStage::Syntax, PatchError::PostPatchSyntaxError(e.to_string()).to_string()))?;
    let r = explore(&q, cfg.explore_options());
    if let Some(report) = BugReport::from_result(&q, &r) {
        return Err(fail(ValidationStage::Explore, report.render(&q)));
    }
    if r.stats.partial {
        return Err(fail(
            ValidationStage::Explore,
            format!("exploration stopped at the depth bound of {} steps; the patched program may not terminate", cfg.depth_bound),
        ));
    }
    let rr = run_random(&q, cfg.runs, cfg.seed, cfg.explore_options());
    if let Some(report) = BugReport::from_result(&q, &rr) {
        return Err(fail(ValidationStage::Random, report.render(&q)));
    }
    if signature(&q) != signature(original) {
        return Err(fail(ValidationStage::Functional, "the patch added, removed or renamed methods or parameters".into()));
    }
    for store in &r.final_states {
        for (name, want) in &cfg.expect_globals {
            let got = store.iter().find(|(g, _)| g == name).map(|(_, v)| *v);
            if got != Some(*want) {
                let shown = got.map(|v| v.to_string()).unwrap_or_else(|| "undefined".into());
                return Err(fail(
                    ValidationStage::Functional,
                    format!("functional check failed: `{name}` ends as {shown}, expected {want}"),
                ));
            }
        }
    }
    Ok(q)
}

struct Conversation<'c> {
    llm: &'c mut dyn LlmClient,
    messages: Vec<ChatMessage>,
    cfg: &'c RepairConfig,
}

impl Conversation<'_> {
    fn ask(&mut self, prompt: &Prompt) -> Result<String, LlmError> {
        self.messages.push(ChatMessage::user(prompt.render()));
        let req = ChatRequest { messages: self.messages.clone(), temperature: self.cfg.temperature, top_p: self.cfg.top_p };
        let mut tries = 0;
        let answer = loop {
            match self.llm.complete(&req) {
                Ok(a) => break a,
                Err(e) if e.is_retryable() && tries < self.cfg.transport_retries => tries += 1,
                Err(e) => return Err(e),
            }
        };
        self.messages.push(ChatMessage::assistant(answer.clone()));
        Ok(answer)
    }
}

/// Runs a repair session on a program the explorer reports as buggy.
pub fn repair(p: &Program, llm: &mut dyn LlmClient, cfg: &RepairConfig) -> Result<RepairSession, AgentError> {
    let detection = explore(p, cfg.explore_options());
    let report = BugReport::from_result(p, &detection).ok_or(AgentError::NoBugDetected)?;
    let report_text = report.render(p);
    let view = extract(p, cfg.stage)?;
    let base = match cfg.stage {
        FilterStage::Original => p.source_text.clone(),
        _ => strip_comments(&p.source_text)?,
    };
    let omitted: Vec<String> = view.omitted.iter().map(|o| o.method.to_string()).collect();
    let protected = protected_lines(&base, &omitted)?;
    let code = CodeView { file: &cfg.file_name, text: &view.text };

    let mut session = RepairSession {
        file: cfg.file_name.clone(),
        client: llm.name(),
        strategy: cfg.strategy,
        stage: cfg.stage,
        temperature: cfg.temperature,
        top_p: cfg.top_p,
        max_attempts: cfg.max_attempts,
        seed: cfg.seed,
        detected: detection.verdict,
        localization: None,
        history: Vec::new(),
        outcome: SessionOutcome::ExhaustedAttempts,
        iter: 0,
        locks_added: None,
        patched_source: None,
    };
    let mut conv = Conversation { llm, messages: Vec::new(), cfg };

    let mut prompt = build_prompt1(code, Some(&report_text), cfg.strategy)?;
    if cfg.strategy == PromptStrategy::TwoStep {
        let response = match conv.ask(&prompt) {
            Ok(r) => r,
            Err(e) => {
                session.outcome = SessionOutcome::Failed { reason: e.to_string() };
                return Ok(session);
            }
        };
        prompt = build_repair_after_localization(code, &response);
        session.localization = Some(LocalizationRecord { prompt: conv.messages[0].content.clone(), response });
    }

    for attempt in 1..=cfg.max_attempts {
        session.iter = attempt;
        let response = match conv.ask(&prompt) {
            Ok(r) => r,
            Err(e) => {
                session.outcome = SessionOutcome::Failed { reason: e.to_string() };
                return Ok(session);
            }
        };
        let result = parse_patches(&response)
            .and_then(|ps| apply_patches(&base, &ps, &protected))
            .map_err(|e| ValidationFailure { stage: ValidationStage::Patch, message: e.to_string() })
            .and_then(|text| validate(p, &text, cfg).map(|q| (text, q)));
        let verdict = match &result {
            Ok(_) => AttemptVerdict::Accepted,
            Err(f) => AttemptVerdict::Rejected { stage: f.stage, error: f.message.clone() },
        };
        session.history.push(AttemptRecord { attempt, prompt: prompt.render(), response, verdict });
        match result {
            Ok((text, q)) => {
                session.outcome = SessionOutcome::Fixed;
                session.locks_added = Some(count_locks_added(p, &q));
                session.patched_source = Some(text);
                return Ok(session);
            }
            Err(f) => prompt = build_prompt2(&f.message),
        }
    }
    session.outcome = SessionOutcome::ExhaustedAttempts;
    Ok(session)
}

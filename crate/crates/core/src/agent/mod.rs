//! Repair agent: prompt construction, model clients, SEARCH/REPLACE patches
//! and the iterative repair loop.

use thiserror::Error;

use crate::extractor::ExtractError;
use crate::lang::LangError;

pub mod client;
pub mod patch;
pub mod prompt;
pub mod session;

pub use client::{ChatMessage, ChatRequest, LiveClient, LlmClient, LlmError, MockClient, MOCK_SEPARATOR};
pub use patch::{apply_patches, parse_patches, Edit, PatchError, PatchSet, Protected};
pub use prompt::{
    build_prompt1, build_prompt2, build_repair_after_localization, CodeView, Prompt, PromptPart, PromptStrategy,
    FEEDBACK_PREFIX,
};
pub use session::{
    repair, validate, AttemptRecord, AttemptVerdict, RepairConfig, RepairSession, SessionOutcome, ValidationFailure,
    ValidationStage,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AgentError {
    #[error("strategy {0} needs a bug report")]
    MissingReport(PromptStrategy),
    #[error("the explorer found no bug to repair")]
    NoBugDetected,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Lang(#[from] LangError),
}

//! Model backends, prompt templates and strict parsing of plan/review JSON.

mod backend;
mod schema;
mod template;

use thiserror::Error;

pub use backend::{
    connect, send_chat, BackendKind, ChatMessage, HttpBackend, ImageAttachment, ModelBackend, ModelBackendConfig,
    Role, ScriptedBackend,
};
pub use schema::{
    parse_slm_review, parse_vlm_plan, PlanFlag, PlanIssue, PlanObject, ReviewDetail, SceneDescription, SlmReview,
    Suggestion, TaskStep, VlmPlan,
};
pub use template::{builtin, render_template, Bindings, PromptTemplate, TemplateKind, KNOWN_PLACEHOLDERS};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("script exhausted after {0} responses")]
    ScriptExhausted(usize),
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GatewayError {
    pub(crate) fn from_json(e: &serde_json::Error) -> Self {
        GatewayError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

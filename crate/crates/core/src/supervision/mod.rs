//! Plan supervision: rule-based validation, feedback, the review/regenerate
//! loop with a single fallback round, and the session archive.

mod archive;
mod constraints;
mod review;
mod session;
mod validate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, Suggestion};

pub use archive::{archive_read, archive_write, ArchiveOutcome, SessionArchive};
pub use constraints::ConstraintSet;
pub use review::{
    correction_prompt, fallback, model_review, rule_based_review, single_dimension_adjust, suggestion_confidence,
};
pub use session::{run_supervision, Reviewer, SessionAbort, SessionReport, SessionTemplates, SessionTurn};
pub use validate::{plan_warnings, validate_plan};

#[derive(Debug, Error)]
pub enum SupervisionError {
    #[error("feedback history is empty")]
    EmptyHistory,
    #[error("feedback history holds no suggestions")]
    NoSuggestions,
    #[error("no issues to adjust")]
    NoIssues,
    #[error("invalid constraints: {0}")]
    InvalidConstraints(String),
    #[error("invalid loop parameters: {0}")]
    InvalidParams(String),
    #[error("archive record violates its invariant: {0}")]
    InvalidArchive(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IssueCategory {
    ParameterError,
    LogicalError,
    ConstraintViolation,
    ParseError,
}

impl IssueCategory {
    /// Lower is more severe.
    pub fn severity_rank(self) -> u8 {
        match self {
            IssueCategory::ParseError => 0,
            IssueCategory::ConstraintViolation => 1,
            IssueCategory::LogicalError => 2,
            IssueCategory::ParameterError => 3,
        }
    }
}

impl fmt::Display for IssueCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub category: IssueCategory,
    pub step_id: Option<String>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_fix: Option<String>,
}

impl Issue {
    pub fn new(category: IssueCategory, step_id: Option<String>, description: impl Into<String>) -> Self {
        Self { category, step_id, description: description.into(), suggested_fix: None }
    }

    pub fn with_fix(mut self, fix: impl Into<String>) -> Self {
        self.suggested_fix = Some(fix.into());
        self
    }

    fn same_adjustment(&self, other: &Issue) -> bool {
        self.category == other.category && self.step_id == other.step_id && self.description == other.description
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub iteration: usize,
    pub accept_flag: bool,
    pub confidence: f64,
    pub issues: Vec<Issue>,
    pub suggestions: Vec<Suggestion>,
    pub prompt_for_vlm: String,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// The one issue this round asks the planner to fix.
    #[serde(default)]
    pub selected: Option<Issue>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackHistory {
    pub records: Vec<FeedbackRecord>,
    /// Issues surfaced so far, one per non-accepting round.
    pub adjustments: Vec<Issue>,
}

impl FeedbackHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn next_iteration(&self) -> usize {
        self.records.last().map_or(1, |r| r.iteration + 1)
    }

    /// Appends a record; iterations must strictly increase.
    pub fn push(&mut self, r: FeedbackRecord) {
        assert!(self.records.last().is_none_or(|l| l.iteration < r.iteration), "iterations must increase");
        if let Some(sel) = &r.selected {
            self.adjustments.push(sel.clone());
        }
        self.records.push(r);
    }

    pub fn was_adjusted(&self, issue: &Issue) -> bool {
        self.adjustments.iter().any(|a| a.same_adjustment(issue))
    }

    pub fn issued_suggestion(&self, text: &str) -> bool {
        self.records.iter().flat_map(|r| &r.suggestions).any(|s| s.text == text)
    }

    /// Short bullet list of past adjustments for prompts; `(none)` if empty.
    pub fn summary(&self) -> String {
        if self.adjustments.is_empty() {
            return "(none)".into();
        }
        self.adjustments
            .iter()
            .map(|a| match &a.step_id {
                Some(id) => format!("\n- step {id}: {}", a.suggested_fix.as_deref().unwrap_or(&a.description)),
                None => format!("\n- {}", a.suggested_fix.as_deref().unwrap_or(&a.description)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopParams {
    pub n_max: usize,
    pub tau: f64,
}

impl Default for LoopParams {
    fn default() -> Self {
        Self { n_max: 5, tau: 0.8 }
    }
}

impl LoopParams {
    pub fn validate(&self) -> Result<(), SupervisionError> {
        if self.n_max == 0 {
            return Err(SupervisionError::InvalidParams("n_max must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(SupervisionError::InvalidParams(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        Ok(())
    }
}

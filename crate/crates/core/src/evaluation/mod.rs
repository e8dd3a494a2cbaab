//! Metrics, seeded evaluation runs and synthetic review-dataset generation.

mod dataset;
mod harness;
mod metrics;
mod scenario;

use thiserror::Error;

use crate::supervision::SupervisionError;

pub use dataset::{
    augment_positive, export_dataset, generate_corpus, generate_dataset, generate_negative, import_dataset,
    positive_sample, validate_schema, AugmentStrategy, Composition, Mutation, NegativeStrategy, Origin, Polarity,
    SampleInput, SampleRecord,
};
pub use harness::{episode_script, evaluate, run_episode, run_episodes, summarize, Episode, Fault, HarnessConfig};
pub use metrics::{
    executability, lcs_len, localization_iou, miou, normalize_token, rouge_l, tsr, EvalReport, Localization,
    MiouParams,
};
pub use scenario::{generate_scenario, Scenario, ScenarioKind};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("nothing to mutate ({0})")]
    NoMutableField(String),
    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),
    #[error("sample is not positive")]
    NotPositive,
    #[error("sample schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Supervision(#[from] SupervisionError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

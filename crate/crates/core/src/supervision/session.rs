use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::archive::now_ms;
use super::review::record_from_issues;
use super::{
    fallback, model_review, rule_based_review, ArchiveOutcome, ConstraintSet, FeedbackHistory, FeedbackRecord, Issue,
    IssueCategory, LoopParams, SessionArchive, SupervisionError,
};
use crate::gateway::{
    builtin, parse_slm_review, parse_vlm_plan, Bindings, ChatMessage, ModelBackend, PromptTemplate, TemplateKind,
    VlmPlan,
};
use crate::simulator::SceneModel;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionTemplates {
    pub vlm: PromptTemplate,
    pub slm: PromptTemplate,
    pub correction: PromptTemplate,
    pub scene_detail: PromptTemplate,
}

impl Default for SessionTemplates {
    fn default() -> Self {
        Self {
            vlm: builtin(TemplateKind::VlmDirect),
            slm: builtin(TemplateKind::SlmReview),
            correction: builtin(TemplateKind::Correction),
            scene_detail: builtin(TemplateKind::SceneDetail),
        }
    }
}

/// Who reviews each plan.
#[derive(Clone, Copy)]
pub enum Reviewer<'a> {
    Rules,
    Model(&'a dyn ModelBackend),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTurn {
    pub n: usize,
    pub vlm_prompt: String,
    pub vlm_output: String,
    pub plan: Option<VlmPlan>,
    pub review: FeedbackRecord,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub archive: SessionArchive,
    pub history: FeedbackHistory,
    pub turns: Vec<SessionTurn>,
    pub final_plan: Option<VlmPlan>,
    pub reviewer_queries: usize,
    pub fallback_prompt: Option<String>,
}

impl SessionReport {
    pub fn accepted(&self) -> bool {
        self.archive.outcome == ArchiveOutcome::Success
    }
}

/// A session stopped by an error, with everything recorded up to it.
#[derive(Debug, Error)]
#[error("supervision aborted after {} review(s): {error}", .history.len())]
pub struct SessionAbort {
    #[source]
    pub error: SupervisionError,
    pub history: FeedbackHistory,
    pub turns: Vec<SessionTurn>,
}

/// Scene objects as marker lines for the planner prompt.
pub(crate) fn scene_markers(scene: &SceneModel) -> String {
    if scene.objects.is_empty() {
        return "(none)".into();
    }
    scene
        .objects
        .iter()
        .map(|o| match o.position {
            Some(p) => format!("- {}: {p}", o.name),
            None => format!("- {}: (position unknown)", o.name),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn control_code(plan: Option<&VlmPlan>, raw: &str) -> String {
    match plan {
        Some(p) => p.task_steps.iter().map(|s| s.action.trim()).collect::<Vec<_>>().join("\n"),
        None => raw.trim().to_string(),
    }
}

struct Session<'a> {
    task: &'a str,
    scene: &'a SceneModel,
    vlm: &'a dyn ModelBackend,
    reviewer: Reviewer<'a>,
    t: &'a SessionTemplates,
    c: &'a ConstraintSet,
    history: FeedbackHistory,
    turns: Vec<SessionTurn>,
    outputs: Vec<String>,
    reviewer_queries: usize,
}

impl Session<'_> {
    fn vlm_prompt(&self, feedback: Option<&str>) -> Result<String, SupervisionError> {
        let mut b = Bindings::new();
        b.insert("T".into(), self.task.to_string());
        b.insert("MARKERS".into(), scene_markers(self.scene));
        b.insert("FEEDBACK".into(), feedback.unwrap_or("(none)").to_string());
        b.insert(
            "HISTORY".into(),
            if self.outputs.is_empty() {
                "(none)".into()
            } else {
                self.outputs.iter().enumerate().map(|(i, o)| format!("\n- <Iteration {}>: {}", i + 1, o.trim())).collect()
            },
        );
        b.insert("ROI".into(), "(none)".into());
        Ok(self.t.vlm.render(&b)?)
    }

    fn review(&mut self, raw: &str, plan: Result<&VlmPlan, String>) -> Result<FeedbackRecord, SupervisionError> {
        self.reviewer_queries += 1;
        match self.reviewer {
            Reviewer::Rules => match plan {
                Ok(p) => rule_based_review(&self.t.correction, &self.history, p, self.scene, self.c),
                Err(e) => {
                    let issue = Issue::new(IssueCategory::ParseError, None, format!("The output is not a valid plan: {e}"))
                        .with_fix("Return one JSON object with \"scene_description\" and \"task_steps\" in the required format.");
                    record_from_issues(&self.t.correction, &self.history, vec![issue], Vec::new())
                }
            },
            Reviewer::Model(slm) => {
                let history_json = serde_json::to_string(
                    &self.history.records.iter().map(|r| r.to_slm_review()).collect::<Vec<_>>(),
                )?;
                let mut b = Bindings::new();
                b.insert("T".into(), self.task.to_string());
                b.insert("PT".into(), self.t.vlm.body.clone());
                b.insert("R".into(), raw.to_string());
                b.insert("H".into(), history_json);
                let prompt = self.t.slm.render(&b)?;
                let reply = slm.send_chat(&[ChatMessage::user(prompt)])?;
                Ok(model_review(&parse_slm_review(&reply)?, &self.history))
            }
        }
    }

    /// One planner call followed by one review.
    fn round(&mut self, feedback: Option<&str>, is_fallback: bool) -> Result<(), SupervisionError> {
        let prompt = self.vlm_prompt(feedback)?;
        let raw = self.vlm.send_chat(&[ChatMessage::user(prompt.clone())])?;
        let parsed = parse_vlm_plan(&raw);
        let record = self.review(&raw, parsed.as_ref().map_err(ToString::to_string))?;
        self.outputs.push(raw.clone());
        self.history.push(record.clone());
        self.turns.push(SessionTurn {
            n: record.iteration,
            vlm_prompt: prompt,
            vlm_output: raw,
            plan: parsed.ok(),
            review: record,
            fallback: is_fallback,
        });
        Ok(())
    }

    fn last(&self) -> &SessionTurn {
        self.turns.last().expect("at least one round ran")
    }
}

/// Review-then-regenerate loop. Each round asks the planner for a plan and
/// has it reviewed; a review with the flag set and confidence above `tau`
/// ends the session. After `n_max` rounds, one fallback round re-prompts
/// about the least confident suggestion so far; if that is not accepted
/// either, the session is archived for human intervention. At most
/// `n_max + 1` reviews happen.
pub fn run_supervision(
    task: &str,
    scene: &SceneModel,
    vlm: &dyn ModelBackend,
    reviewer: Reviewer<'_>,
    templates: &SessionTemplates,
    c: &ConstraintSet,
    p: &LoopParams,
) -> Result<SessionReport, Box<SessionAbort>> {
    let started_ms = now_ms();
    let mut s = Session {
        task,
        scene,
        vlm,
        reviewer,
        t: templates,
        c,
        history: FeedbackHistory::default(),
        turns: Vec::new(),
        outputs: Vec::new(),
        reviewer_queries: 0,
    };
    match drive(&mut s, p, started_ms) {
        Ok(r) => Ok(r),
        Err(error) => Err(Box::new(SessionAbort { error, history: s.history, turns: s.turns })),
    }
}

fn drive(s: &mut Session<'_>, p: &LoopParams, started_ms: u64) -> Result<SessionReport, SupervisionError> {
    p.validate()?;
    s.c.validate()?;
    let accepted = |r: &FeedbackRecord| r.accept_flag && r.confidence > p.tau;

    let mut feedback: Option<String> = None;
    let mut fallback_prompt = None;
    let mut done = false;
    for _ in 0..p.n_max {
        s.round(feedback.as_deref(), false)?;
        if accepted(&s.last().review) {
            done = true;
            break;
        }
        feedback = Some(s.last().review.prompt_for_vlm.clone());
    }
    if !done {
        let fb = match fallback(&s.history, &s.t.correction) {
            Err(SupervisionError::NoSuggestions) => s.last().review.prompt_for_vlm.clone(),
            other => other?,
        };
        s.round(Some(&fb), true)?;
        fallback_prompt = Some(fb);
        done = accepted(&s.last().review);
    }

    let last = s.last().clone();
    let code = control_code(last.plan.as_ref(), &last.vlm_output);
    let (outcome, scenario_info) = if done {
        let mut b = Bindings::new();
        b.insert("T".into(), s.task.to_string());
        let detail = s.vlm.send_chat(&[ChatMessage::user(s.t.scene_detail.render(&b)?)])?;
        (ArchiveOutcome::Success, detail.trim().to_string())
    } else {
        (ArchiveOutcome::HumanIntervention, scene_markers(s.scene))
    };
    let archive = SessionArchive {
        id: None,
        scenario_info,
        task_info: s.task.to_string(),
        control_code: code,
        started_ms,
        finished_ms: now_ms().max(started_ms),
        outcome,
        iterations: s.history.len(),
    };
    Ok(SessionReport {
        archive,
        history: std::mem::take(&mut s.history),
        turns: std::mem::take(&mut s.turns),
        final_plan: last.plan,
        reviewer_queries: s.reviewer_queries,
        fallback_prompt,
    })
}

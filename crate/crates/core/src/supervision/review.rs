use std::cmp::Ordering;

use super::{
    plan_warnings, validate_plan, ConstraintSet, FeedbackHistory, FeedbackRecord, Issue, IssueCategory,
    SupervisionError,
};
use crate::gateway::{Bindings, PromptTemplate, ReviewDetail, SlmReview, Suggestion, VlmPlan};
use crate::simulator::SceneModel;

pub fn suggestion_confidence(c: IssueCategory) -> f64 {
    match c {
        IssueCategory::ParameterError => 0.9,
        IssueCategory::LogicalError => 0.8,
        IssueCategory::ConstraintViolation => 0.85,
        IssueCategory::ParseError => 0.95,
    }
}

fn step_key(id: Option<&str>) -> (u8, u64, String) {
    match id {
        Some(s) => match s.trim().parse::<u64>() {
            Ok(n) => (0, n, String::new()),
            Err(_) => (1, 0, s.to_string()),
        },
        None => (2, 0, String::new()),
    }
}

fn priority(a: &Issue, b: &Issue) -> Ordering {
    a.category
        .severity_rank()
        .cmp(&b.category.severity_rank())
        .then_with(|| step_key(a.step_id.as_deref()).cmp(&step_key(b.step_id.as_deref())))
}

fn letter_id(i: usize) -> String {
    let mut n = i;
    let mut s = Vec::new();
    loop {
        s.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).expect("ascii")
}

/// Picks the single issue to surface this round: most severe category,
/// then earliest step, skipping ones already adjusted. If every issue was
/// adjusted before, the top one is returned anyway.
pub fn single_dimension_adjust(issues: &[Issue], history: &FeedbackHistory) -> Result<Issue, SupervisionError> {
    let mut ordered: Vec<&Issue> = issues.iter().collect();
    ordered.sort_by(|a, b| priority(a, b));
    let first = *ordered.first().ok_or(SupervisionError::NoIssues)?;
    Ok(ordered.into_iter().find(|i| !history.was_adjusted(i)).unwrap_or(first).clone())
}

pub fn correction_prompt(
    template: &PromptTemplate,
    issue: &str,
    suggestion: &str,
    history: &FeedbackHistory,
) -> Result<String, SupervisionError> {
    let mut b = Bindings::new();
    b.insert("ISSUE".into(), issue.to_string());
    b.insert("SUGGESTION".into(), suggestion.to_string());
    b.insert("HISTORY".into(), history.summary());
    Ok(template.render(&b)?)
}

/// Deterministic reviewer standing in for the supervising model.
pub fn rule_based_review(
    correction: &PromptTemplate,
    history: &FeedbackHistory,
    plan: &VlmPlan,
    scene: &SceneModel,
    c: &ConstraintSet,
) -> Result<FeedbackRecord, SupervisionError> {
    record_from_issues(correction, history, validate_plan(plan, scene, c), plan_warnings(plan))
}

/// Builds the reviewer's record for a known issue list.
pub(crate) fn record_from_issues(
    correction: &PromptTemplate,
    history: &FeedbackHistory,
    issues: Vec<Issue>,
    warnings: Vec<String>,
) -> Result<FeedbackRecord, SupervisionError> {
    let iteration = history.next_iteration();
    if issues.is_empty() {
        let confidence = (1.0 - 0.1 * warnings.len() as f64).max(0.5);
        return Ok(FeedbackRecord {
            iteration,
            accept_flag: true,
            confidence,
            issues,
            suggestions: Vec::new(),
            prompt_for_vlm: "The plan satisfies all constraints; no changes are required.".into(),
            warnings,
            selected: None,
        });
    }

    let confidence = (1.0 - 0.2 * issues.len() as f64).max(0.0);
    let mut ordered: Vec<&Issue> = issues.iter().collect();
    ordered.sort_by(|a, b| priority(a, b));
    let mut suggestions: Vec<Suggestion> = Vec::new();
    for i in ordered {
        let text = i.suggested_fix.clone().unwrap_or_else(|| i.description.clone());
        if history.issued_suggestion(&text) || suggestions.iter().any(|s| s.text == text) {
            continue;
        }
        suggestions.push(Suggestion { id: letter_id(suggestions.len()), text, confidence: suggestion_confidence(i.category) });
    }
    let selected = single_dimension_adjust(&issues, history)?;
    let fix = selected.suggested_fix.as_deref().unwrap_or(&selected.description);
    let prompt_for_vlm = correction_prompt(correction, &selected.description, fix, history)?;
    Ok(FeedbackRecord {
        iteration,
        accept_flag: false,
        confidence,
        issues,
        suggestions,
        prompt_for_vlm,
        warnings,
        selected: Some(selected),
    })
}

fn guess_category(text: &str) -> IssueCategory {
    let t = text.to_ascii_lowercase();
    let any = |ws: &[&str]| ws.iter().any(|w| t.contains(w));
    if any(&["not recognized", "undefined", "unknown function", "parse", "syntax", "invalid function"]) {
        IssueCategory::ParseError
    } else if any(&["force", "clearance", "collision", "obstacle", "safe", "threshold"]) {
        IssueCategory::ConstraintViolation
    } else if any(&["before", "after", "order", "sequence", "release", "holding", "missing step"]) {
        IssueCategory::LogicalError
    } else {
        IssueCategory::ParameterError
    }
}

/// Converts a model-produced review into a record. Categories are inferred
/// from the issue wording. On acceptance, listed details become warnings.
pub fn model_review(review: &SlmReview, history: &FeedbackHistory) -> FeedbackRecord {
    let iteration = history.next_iteration();
    let mut issues: Vec<Issue> = review
        .details
        .iter()
        .map(|d| Issue {
            category: guess_category(&d.issue),
            step_id: d.step_id.clone(),
            description: d.issue.clone(),
            suggested_fix: d.recommendation.clone(),
        })
        .collect();
    let mut warnings = Vec::new();
    if review.accept_flag {
        warnings = issues.drain(..).map(|i| i.description).collect();
    }
    let selected = if issues.is_empty() { None } else { single_dimension_adjust(&issues, history).ok() };
    FeedbackRecord {
        iteration,
        accept_flag: review.accept_flag,
        confidence: review.confidence,
        issues,
        suggestions: review.suggestions.clone(),
        prompt_for_vlm: review.prompt_for_vlm.clone(),
        warnings,
        selected,
    }
}

/// Correction prompt about the lowest-confidence suggestion ever issued.
/// Ties go to the earliest record, then the earliest suggestion in it.
pub fn fallback(history: &FeedbackHistory, correction: &PromptTemplate) -> Result<String, SupervisionError> {
    if history.is_empty() {
        return Err(SupervisionError::EmptyHistory);
    }
    let mut best: Option<(&FeedbackRecord, &Suggestion)> = None;
    for r in &history.records {
        for s in &r.suggestions {
            if best.is_none_or(|(_, b)| s.confidence < b.confidence) {
                best = Some((r, s));
            }
        }
    }
    let (r, s) = best.ok_or(SupervisionError::NoSuggestions)?;
    let issue = format!(
        "Suggestion {} from review round {} (confidence {:.2}) has not been resolved.",
        s.id, r.iteration, s.confidence
    );
    correction_prompt(correction, &issue, &s.text, history)
}

impl FeedbackRecord {
    /// The record in the supervisor's JSON layout.
    pub fn to_slm_review(&self) -> SlmReview {
        let feedback = if self.issues.is_empty() {
            "The plan is executable and satisfies the task constraints.".to_string()
        } else {
            let mut cats: Vec<IssueCategory> = self.issues.iter().map(|i| i.category).collect();
            cats.sort_by_key(|c| c.severity_rank());
            cats.dedup();
            format!(
                "The plan has {} issue(s) ({}) that must be fixed before execution.",
                self.issues.len(),
                cats.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
            )
        };
        SlmReview {
            feedback,
            details: self
                .issues
                .iter()
                .map(|i| ReviewDetail { step_id: i.step_id.clone(), issue: i.description.clone(), recommendation: i.suggested_fix.clone() })
                .collect(),
            suggestions: self.suggestions.clone(),
            confidence: self.confidence,
            prompt_for_vlm: self.prompt_for_vlm.clone(),
            accept_flag: self.accept_flag,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issue(c: IssueCategory, step: &str) -> Issue {
        Issue::new(c, Some(step.into()), format!("{c} at {step}"))
    }

    fn rec(iteration: usize, confs: &[f64]) -> FeedbackRecord {
        FeedbackRecord {
            iteration,
            accept_flag: false,
            confidence: 0.4,
            issues: vec![],
            suggestions: confs
                .iter()
                .enumerate()
                .map(|(i, c)| Suggestion { id: letter_id(i), text: format!("r{iteration}s{i}"), confidence: *c })
                .collect(),
            prompt_for_vlm: String::new(),
            warnings: vec![],
            selected: None,
        }
    }

    #[test]
    fn adjust_order() {
        let h = FeedbackHistory::default();
        let one = [issue(IssueCategory::LogicalError, "2")];
        assert_eq!(single_dimension_adjust(&one, &h).unwrap(), one[0]);
        let two = [issue(IssueCategory::ConstraintViolation, "4"), issue(IssueCategory::ParseError, "5")];
        assert_eq!(single_dimension_adjust(&two, &h).unwrap(), two[1]);
        let steps = [issue(IssueCategory::ParseError, "10"), issue(IssueCategory::ParseError, "9")];
        assert_eq!(single_dimension_adjust(&steps, &h).unwrap(), steps[1]);

        let mut h = FeedbackHistory::default();
        let mut r = rec(1, &[]);
        r.selected = Some(two[1].clone());
        h.push(r);
        assert_eq!(single_dimension_adjust(&two, &h).unwrap(), two[0]);
        assert_eq!(single_dimension_adjust(&two[1..], &h).unwrap(), two[1]);
        assert!(matches!(single_dimension_adjust(&[], &h), Err(SupervisionError::NoIssues)));
    }

    #[test]
    fn fallback_argmin_and_ties() {
        let t = crate::gateway::builtin(crate::gateway::TemplateKind::Correction);
        assert!(matches!(fallback(&FeedbackHistory::default(), &t), Err(SupervisionError::EmptyHistory)));

        let mut h = FeedbackHistory::default();
        h.push(rec(1, &[0.9]));
        assert!(fallback(&h, &t).unwrap().contains("r1s0"));

        let mut h = FeedbackHistory::default();
        h.push(rec(1, &[0.9, 0.7, 0.8]));
        assert!(fallback(&h, &t).unwrap().contains("r1s1"));

        let mut h = FeedbackHistory::default();
        for (i, c) in [0.9, 0.7, 0.8, 0.7].into_iter().enumerate() {
            h.push(rec(i + 1, &[c]));
        }
        let p = fallback(&h, &t).unwrap();
        assert!(p.contains("r2s0") && !p.contains("r4s0"));
    }

    #[test]
    fn letters() {
        assert_eq!(letter_id(0), "A");
        assert_eq!(letter_id(25), "Z");
        assert_eq!(letter_id(26), "AA");
    }
}

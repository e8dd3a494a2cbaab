use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::GatewayError;
use crate::geometry::Vec3;
use crate::synthesis::RoiBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanObject {
    pub name: String,
    pub position: Vec3,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SceneDescription {
    pub objects: Vec<PlanObject>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStep {
    pub step_id: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanIssue {
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanFlag {
    #[default]
    Complete,
    Incomplete,
}

impl PlanFlag {
    pub fn is_set(self) -> bool {
        self == PlanFlag::Complete
    }

    fn from_value(v: Option<&Value>) -> Self {
        match v {
            None => PlanFlag::Complete,
            Some(Value::String(s)) if s == "complete" => PlanFlag::Complete,
            Some(_) => PlanFlag::Incomplete,
        }
    }
}

/// A parsed VLM response.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct VlmPlan {
    pub scene_description: SceneDescription,
    pub task_steps: Vec<TaskStep>,
    #[serde(default)]
    pub issues: Vec<PlanIssue>,
    #[serde(default)]
    pub flag: PlanFlag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi: Option<RoiBox>,
    /// The model asked for a fresh image before the next round.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recapture: bool,
    /// Unrecognized top-level fields, kept verbatim.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl VlmPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Steps as `(step_id, action)` pairs.
    pub fn actions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.task_steps.iter().map(|s| (s.step_id.as_str(), s.action.as_str()))
    }
}

fn schema(msg: impl Into<String>) -> GatewayError {
    GatewayError::Schema(msg.into())
}

fn parse_json(raw: &str) -> Result<Value, GatewayError> {
    serde_json::from_str(raw).map_err(|e| GatewayError::from_json(&e))
}

fn as_text(v: &Value, field: &str) -> Result<String, GatewayError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(schema(format!("{field} must be a string"))),
    }
}

fn as_vec3(v: &Value, field: &str) -> Result<Vec3, GatewayError> {
    let arr = v.as_array().filter(|a| a.len() == 3).ok_or_else(|| schema(format!("{field} must be [x, y, z]")))?;
    let mut xyz = [0.0; 3];
    for (slot, item) in xyz.iter_mut().zip(arr) {
        *slot = item
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| schema(format!("{field} must contain finite numbers")))?;
    }
    Ok(Vec3::from(xyz))
}

fn parse_object(v: &Value, i: usize) -> Result<PlanObject, GatewayError> {
    let field = format!("scene_description.objects[{i}]");
    let o = v.as_object().ok_or_else(|| schema(format!("{field} must be an object")))?;
    let name = as_text(o.get("name").ok_or_else(|| schema(format!("{field}.name is required")))?, &format!("{field}.name"))?;
    let position =
        as_vec3(o.get("position").ok_or_else(|| schema(format!("{field}.position is required")))?, &format!("{field}.position"))?;
    let properties = match o.get("properties") {
        None | Some(Value::Null) => BTreeMap::new(),
        Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        Some(_) => return Err(schema(format!("{field}.properties must be an object"))),
    };
    Ok(PlanObject { name, position, properties })
}

fn parse_step(v: &Value, i: usize) -> Result<TaskStep, GatewayError> {
    let field = format!("task_steps[{i}]");
    let o = v.as_object().ok_or_else(|| schema(format!("{field} must be an object")))?;
    let step_id = as_text(o.get("step_id").ok_or_else(|| schema(format!("{field}.step_id is required")))?, &format!("{field}.step_id"))?;
    let action = as_text(o.get("action").ok_or_else(|| schema(format!("{field}.action is required")))?, &format!("{field}.action"))?;
    let description = o.get("description").map(|d| as_text(d, &format!("{field}.description"))).transpose()?;
    Ok(TaskStep { step_id, action, description })
}

fn parse_issue(v: &Value, i: usize) -> Result<PlanIssue, GatewayError> {
    let field = format!("issues[{i}]");
    match v {
        Value::String(s) => Ok(PlanIssue { description: s.clone(), step_id: None, suggestion: None }),
        Value::Object(o) => Ok(PlanIssue {
            description: as_text(
                o.get("description").ok_or_else(|| schema(format!("{field}.description is required")))?,
                &format!("{field}.description"),
            )?,
            step_id: o.get("step_id").map(|s| as_text(s, &format!("{field}.step_id"))).transpose()?,
            suggestion: o.get("suggestion").map(|s| as_text(s, &format!("{field}.suggestion"))).transpose()?,
        }),
        _ => Err(schema(format!("{field} must be an object"))),
    }
}

/// Strict parse of a VLM plan. Missing `flag` means complete; any value
/// other than `"complete"` means incomplete. A malformed `roi` is dropped.
pub fn parse_vlm_plan(raw: &str) -> Result<VlmPlan, GatewayError> {
    plan_from_value(parse_json(raw)?)
}

impl<'de> Deserialize<'de> for VlmPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        plan_from_value(Value::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

fn plan_from_value(v: Value) -> Result<VlmPlan, GatewayError> {
    let mut top = match v {
        Value::Object(m) => m,
        _ => return Err(schema("top level must be an object")),
    };
    let scene = top.remove("scene_description").ok_or_else(|| schema("scene_description is required"))?;
    let objects = scene
        .get("objects")
        .and_then(Value::as_array)
        .ok_or_else(|| schema("scene_description.objects must be a list"))?
        .iter()
        .enumerate()
        .map(|(i, o)| parse_object(o, i))
        .collect::<Result<Vec<_>, _>>()?;
    let names: BTreeSet<&str> = objects.iter().map(|o| o.name.as_str()).collect();
    if names.len() != objects.len() {
        return Err(schema("scene_description.objects has duplicate names"));
    }

    let steps = top.remove("task_steps").ok_or_else(|| schema("task_steps is required"))?;
    let task_steps = steps
        .as_array()
        .ok_or_else(|| schema("task_steps must be a list"))?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_step(s, i))
        .collect::<Result<Vec<_>, _>>()?;
    let ids: BTreeSet<&str> = task_steps.iter().map(|s| s.step_id.as_str()).collect();
    if ids.len() != task_steps.len() {
        return Err(schema("task_steps has duplicate step_id values"));
    }

    let issues = match top.remove("issues") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.iter().enumerate().map(|(i, x)| parse_issue(x, i)).collect::<Result<_, _>>()?,
        Some(_) => return Err(schema("issues must be a list")),
    };
    let flag = PlanFlag::from_value(top.remove("flag").as_ref());
    let roi = top.remove("roi").and_then(|r| RoiBox::from_value(&r));
    let recapture = matches!(top.remove("recapture"), Some(Value::Bool(true)));

    Ok(VlmPlan { scene_description: SceneDescription { objects }, task_steps, issues, flag, roi, recapture, extra: top })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub id: String,
    pub text: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_id: Option<String>,
    pub issue: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<String>,
}

/// A parsed supervisor response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SlmReview {
    pub feedback: String,
    pub details: Vec<ReviewDetail>,
    pub suggestions: Vec<Suggestion>,
    pub confidence: f64,
    pub prompt_for_vlm: String,
    pub accept_flag: bool,
}

fn norm_key(k: &str) -> String {
    k.chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_lowercase()).collect()
}

fn unit_interval(x: f64, field: &str) -> Result<f64, GatewayError> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(schema(format!("{field} must be in [0, 1], got {x}")))
    }
}

fn lookup<'a>(o: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    o.iter().find(|(k, _)| norm_key(k) == key).map(|(_, v)| v)
}

impl SlmReview {
    /// Serializes to the mixed-case layout used by the review template.
    pub fn to_value(&self) -> Value {
        let mut feedback = Map::new();
        feedback.insert("Description".into(), Value::String(self.feedback.clone()));
        feedback.insert("Details".into(), serde_json::to_value(&self.details).expect("details serialize"));
        let mut m = Map::new();
        m.insert("Feedback".into(), Value::Object(feedback));
        m.insert("Suggestions".into(), serde_json::to_value(&self.suggestions).expect("suggestions serialize"));
        m.insert("Confidence".into(), serde_json::json!(self.confidence));
        m.insert("Prompt for VLM".into(), Value::String(self.prompt_for_vlm.clone()));
        m.insert("Flag".into(), Value::from(u8::from(self.accept_flag)));
        Value::Object(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("review serializes")
    }
}

impl Serialize for SlmReview {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SlmReview {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        review_from_value(&v).map_err(serde::de::Error::custom)
    }
}

fn parse_detail(v: &Value, i: usize) -> Result<ReviewDetail, GatewayError> {
    let field = format!("Feedback.Details[{i}]");
    let o = v.as_object().ok_or_else(|| schema(format!("{field} must be an object")))?;
    Ok(ReviewDetail {
        step_id: lookup(o, "stepid").map(|s| as_text(s, &format!("{field}.step_id"))).transpose()?,
        issue: as_text(lookup(o, "issue").ok_or_else(|| schema(format!("{field}.issue is required")))?, &format!("{field}.issue"))?,
        recommendation: lookup(o, "recommendation").map(|s| as_text(s, &format!("{field}.recommendation"))).transpose()?,
    })
}

fn parse_suggestion(v: &Value, i: usize) -> Result<Suggestion, GatewayError> {
    let field = format!("Suggestions[{i}]");
    let o = v.as_object().ok_or_else(|| schema(format!("{field} must be an object")))?;
    let id = as_text(lookup(o, "id").ok_or_else(|| schema(format!("{field}.id is required")))?, &format!("{field}.id"))?;
    let text = as_text(lookup(o, "text").ok_or_else(|| schema(format!("{field}.text is required")))?, &format!("{field}.text"))?;
    let confidence = lookup(o, "confidence")
        .and_then(Value::as_f64)
        .ok_or_else(|| schema(format!("{field}.confidence must be a number")))?;
    Ok(Suggestion { id, text, confidence: unit_interval(confidence, &format!("{field}.confidence"))? })
}

fn review_from_value(v: &Value) -> Result<SlmReview, GatewayError> {
    let o = v.as_object().ok_or_else(|| schema("top level must be an object"))?;

    let (feedback, details) = match lookup(o, "feedback") {
        None | Some(Value::Null) => (String::new(), Vec::new()),
        Some(Value::String(s)) => (s.clone(), Vec::new()),
        Some(Value::Array(a)) => {
            let lines = a.iter().map(|x| as_text(x, "Feedback[]")).collect::<Result<Vec<_>, _>>()?;
            (lines.join("\n"), Vec::new())
        }
        Some(Value::Object(f)) => {
            let desc = lookup(f, "description").map(|d| as_text(d, "Feedback.Description")).transpose()?.unwrap_or_default();
            let details = match lookup(f, "details") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(a)) => a.iter().enumerate().map(|(i, d)| parse_detail(d, i)).collect::<Result<_, _>>()?,
                Some(_) => return Err(schema("Feedback.Details must be a list")),
            };
            (desc, details)
        }
        Some(_) => return Err(schema("Feedback must be text or an object")),
    };

    let suggestions = match lookup(o, "suggestions") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.iter().enumerate().map(|(i, s)| parse_suggestion(s, i)).collect::<Result<_, _>>()?,
        Some(_) => return Err(schema("Suggestions must be a list")),
    };

    let confidence = match lookup(o, "confidence") {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::Object(c)) => lookup(c, "value").and_then(Value::as_f64),
        None => return Err(schema("Confidence is required")),
        _ => None,
    }
    .ok_or_else(|| schema("Confidence must be a number"))?;
    let confidence = unit_interval(confidence, "Confidence")?;

    let prompt_for_vlm = match lookup(o, "promptforvlm") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Object(p)) => lookup(p, "command").map(|c| as_text(c, "Prompt for VLM.Command")).transpose()?.unwrap_or_default(),
        Some(_) => return Err(schema("Prompt for VLM must be text or an object")),
    };

    let accept_flag = match lookup(o, "flag").or_else(|| lookup(o, "acceptflag")) {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::Number(n)) => match n.as_f64() {
            Some(0.0) => false,
            Some(1.0) => true,
            _ => return Err(schema("Flag must be 0 or 1")),
        },
        Some(_) => return Err(schema("Flag must be 0 or 1")),
    };

    Ok(SlmReview { feedback, details, suggestions, confidence, prompt_for_vlm, accept_flag })
}

/// Strict parse of a supervisor review. Keys match case- and
/// punctuation-insensitively; a missing flag means reject.
pub fn parse_slm_review(raw: &str) -> Result<SlmReview, GatewayError> {
    review_from_value(&parse_json(raw)?)
}

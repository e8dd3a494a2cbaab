use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// Every `{NAME}` a template may contain.
pub const KNOWN_PLACEHOLDERS: &[&str] =
    &["T", "PT", "H", "R", "MARKERS", "FEEDBACK", "HISTORY", "ROI", "ISSUE", "SUGGESTION", "SCENE"];

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Single-shot planning from annotated markers.
    VlmDirect,
    /// Multi-round planning with history and ROI.
    VlmIterative,
    SlmReview,
    Correction,
    SceneDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

/// A placeholder token occurrence: byte range and name.
fn scan(body: &str) -> Vec<(usize, usize, &str)> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_uppercase() {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j].is_ascii_digit() || bytes[j] == b'_') {
                j += 1;
            }
            if j < bytes.len() && bytes[j] == b'}' {
                out.push((i, j + 1, &body[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptTemplate {
    /// Rejects bodies that use a placeholder outside [`KNOWN_PLACEHOLDERS`].
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, GatewayError> {
        let t = Self { name: name.into(), body: body.into() };
        if let Some(bad) = t.placeholders().into_iter().find(|p| !KNOWN_PLACEHOLDERS.contains(&p.as_str())) {
            return Err(GatewayError::UnknownPlaceholder(bad));
        }
        Ok(t)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, std::fs::read_to_string(path)?)
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for (_, _, name) in scan(&self.body) {
            if !seen.iter().any(|s| s == name) {
                seen.push(name.to_string());
            }
        }
        seen
    }

    pub fn render(&self, bindings: &Bindings) -> Result<String, GatewayError> {
        render_template(self, bindings)
    }
}

/// Single-pass literal substitution. A placeholder whose binding is absent
/// or empty is an error; substituted text is never re-scanned.
pub fn render_template(t: &PromptTemplate, bindings: &Bindings) -> Result<String, GatewayError> {
    let mut out = String::with_capacity(t.body.len());
    let mut last = 0;
    for (start, end, name) in scan(&t.body) {
        let value = bindings
            .get(name)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| GatewayError::MissingPlaceholder(name.to_string()))?;
        out.push_str(&t.body[last..start]);
        out.push_str(value);
        last = end;
    }
    out.push_str(&t.body[last..]);
    Ok(out)
}

pub fn builtin(kind: TemplateKind) -> PromptTemplate {
    let (name, body) = match kind {
        TemplateKind::VlmDirect => ("vlm_direct", include_str!("../../assets/templates/vlm_direct.txt")),
        TemplateKind::VlmIterative => ("vlm_iterative", include_str!("../../assets/templates/vlm_iterative.txt")),
        TemplateKind::SlmReview => ("slm_review", include_str!("../../assets/templates/slm_review.txt")),
        TemplateKind::Correction => ("correction", include_str!("../../assets/templates/correction.txt")),
        TemplateKind::SceneDetail => ("scene_detail", include_str!("../../assets/templates/scene_detail.txt")),
    };
    PromptTemplate { name: name.into(), body: body.into() }
}

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAttachment {
    pub media_type: String,
    /// Base64 payload, no data-URL prefix.
    pub data: String,
}

impl ImageAttachment {
    pub fn png(bytes: &[u8]) -> Self {
        Self { media_type: "image/png".into(), data: base64::engine::general_purpose::STANDARD.encode(bytes) }
    }

    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageAttachment>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into(), image: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into(), image: None }
    }

    pub fn with_image(mut self, image: ImageAttachment) -> Self {
        self.image = Some(image);
        self
    }

    fn wire(&self) -> Value {
        match &self.image {
            None => json!({"role": self.role, "content": self.content}),
            Some(img) => json!({
                "role": self.role,
                "content": [
                    {"type": "text", "text": self.content},
                    {"type": "image_url", "image_url": {"url": img.data_url()}}
                ]
            }),
        }
    }
}

/// Anything that turns a conversation into one reply.
pub trait ModelBackend: Send + Sync {
    fn send_chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError>;
}

impl<B: ModelBackend + ?Sized> ModelBackend for &B {
    fn send_chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).send_chat(messages)
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn send_chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        (**self).send_chat(messages)
    }
}

/// Replays canned replies in order; ignores the request entirely.
#[derive(Debug)]
pub struct ScriptedBackend {
    lines: Vec<String>,
    cursor: AtomicUsize,
}

impl ScriptedBackend {
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { lines: lines.into_iter().map(Into::into).collect(), cursor: AtomicUsize::new(0) }
    }

    /// JSONL script: each non-blank line is a JSON string holding one
    /// reply. A line that is not a JSON string is used verbatim, so
    /// object-per-line scripts work too.
    pub fn parse(text: &str) -> Self {
        Self::from_lines(text.lines().filter(|l| !l.trim().is_empty()).map(|l| {
            match serde_json::from_str::<Value>(l) {
                Ok(Value::String(s)) => s,
                _ => l.to_string(),
            }
        }))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Serializes replies back to the JSONL script format.
    pub fn to_jsonl(lines: &[String]) -> String {
        lines.iter().map(|l| serde_json::to_string(l).expect("string serializes") + "\n").collect()
    }

    pub fn calls(&self) -> usize {
        self.cursor.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.lines.len().saturating_sub(self.calls())
    }
}

impl ModelBackend for ScriptedBackend {
    fn send_chat(&self, _messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let i = self.cursor.fetch_add(1, Ordering::SeqCst);
        self.lines.get(i).cloned().ok_or(GatewayError::ScriptExhausted(self.lines.len()))
    }
}

/// Chat-completions client: POSTs `{model, messages, temperature}` and
/// returns `choices[0].message.content`.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str, temperature: f64, timeout: Duration, api_key: Option<String>) -> Result<Self, GatewayError> {
        let trimmed = base_url.trim_end_matches('/');
        let url =
            if trimmed.ends_with("/chat/completions") { trimmed.to_string() } else { format!("{trimmed}/chat/completions") };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Backend(e.to_string()))?;
        Ok(Self { client, url, model: model.into(), temperature, api_key })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ModelBackend for HttpBackend {
    fn send_chat(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": messages.iter().map(ChatMessage::wire).collect::<Vec<_>>(),
            "temperature": self.temperature,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Backend(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(GatewayError::Backend(format!("HTTP {status}: {text}")));
        }
        let v: Value = resp.json().map_err(|e| GatewayError::Backend(format!("invalid response body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Backend("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_timeout() -> f64 {
    60.0
}

impl ModelBackendConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: BackendKind::Scripted,
            base_url: None,
            model: None,
            temperature: 0.0,
            timeout_secs: default_timeout(),
            script: Some(path.into()),
            api_key_env: None,
        }
    }

    pub fn http(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            base_url: Some(base_url.into()),
            model: Some(model.into()),
            temperature: 0.0,
            timeout_secs: default_timeout(),
            script: None,
            api_key_env: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            BackendKind::Scripted if self.script.is_none() => Err(GatewayError::Config("scripted backend needs `script`".into())),
            BackendKind::Http if self.base_url.as_deref().is_none_or(str::is_empty) => {
                Err(GatewayError::Config("http backend needs `base_url`".into()))
            }
            BackendKind::Http if self.model.as_deref().is_none_or(str::is_empty) => {
                Err(GatewayError::Config("http backend needs `model`".into()))
            }
            _ if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) => {
                Err(GatewayError::Config("timeout_secs must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Builds a backend handle. Scripted backends keep their cursor for the
/// lifetime of the handle.
pub fn connect(cfg: &ModelBackendConfig) -> Result<Box<dyn ModelBackend>, GatewayError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Scripted => Ok(Box::new(ScriptedBackend::load(cfg.script.as_ref().expect("validated"))?)),
        BackendKind::Http => {
            let key = cfg.api_key_env.as_ref().and_then(|k| std::env::var(k).ok());
            Ok(Box::new(HttpBackend::new(
                cfg.base_url.as_deref().expect("validated"),
                cfg.model.as_deref().expect("validated"),
                cfg.temperature,
                Duration::from_secs_f64(cfg.timeout_secs),
                key,
            )?))
        }
    }
}

/// One-shot request. A scripted config always answers with its first line;
/// hold a handle from [`connect`] to step through a script.
pub fn send_chat(cfg: &ModelBackendConfig, messages: &[ChatMessage]) -> Result<String, GatewayError> {
    connect(cfg)?.send_chat(messages)
}

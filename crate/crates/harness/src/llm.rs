//! Chat-completion client for model-guided proposals.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use qpolicy_core::policy::{parse_policy, PolicyDocument};

use crate::proposer::{render_prompt, ProposalContext};

pub const API_KEY_ENV: &str = "AQR_LLM_API_KEY";
pub const URL_ENV: &str = "AQR_LLM_URL";
pub const DEFAULT_URL: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;
/// Validation rounds per proposal, counting the first prompt.
pub const MAX_PROMPTS: usize = 3;
const REDACTED: &str = "[REDACTED]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("endpoint returned status {status}")]
    Status { status: u16 },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("stub transcript exhausted after {0} responses")]
    Exhausted(usize),
}

/// Sends one chat exchange and returns the assistant's text.
pub trait ChatTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, TransportError>;

    /// Requests sent so far, including network retries.
    fn requests(&self) -> usize;

    /// Strings that must never be persisted.
    fn secrets(&self) -> Vec<String> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    #[serde(default)]
    pub url: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub network_attempts: usize,
    #[serde(default = "default_backoff")]
    pub backoff_initial_ms: u64,
}

fn default_model() -> String {
    DEFAULT_MODEL.into()
}
fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}
fn default_retries() -> usize {
    3
}
fn default_backoff() -> u64 {
    1000
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            url: None,
            model: default_model(),
            temperature: DEFAULT_TEMPERATURE,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            network_attempts: default_retries(),
            backoff_initial_ms: default_backoff(),
        }
    }
}

impl LlmSettings {
    /// Configured URL, then the environment override, then the default.
    pub fn resolved_url(&self) -> String {
        std::env::var(URL_ENV)
            .ok()
            .filter(|u| !u.is_empty())
            .or_else(|| self.url.clone())
            .unwrap_or_else(|| DEFAULT_URL.into())
    }
}

/// Blocking HTTP transport with bearer auth, bounded retries and a
/// per-request wall-clock timeout.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: String,
    settings: LlmSettings,
    requests: usize,
}

impl HttpTransport {
    pub fn new(url: String, api_key: String, settings: LlmSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            url,
            api_key,
            settings,
            requests: 0,
        }
    }

    /// Reads the key from the environment; `None` when it is unset.
    pub fn from_env(settings: LlmSettings) -> Option<Self> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())?;
        Some(HttpTransport::new(settings.resolved_url(), key, settings))
    }

    fn send_once(&mut self, body: &str) -> Result<String, TransportError> {
        self.requests += 1;
        let response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Err(TransportError::Timeout),
            Err(e) => return Err(TransportError::Network(redact(&e.to_string(), &[self.api_key.clone()]))),
        };
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status });
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Malformed(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))
    }
}

fn retryable(e: &TransportError) -> bool {
    match e {
        TransportError::Network(_) => true,
        TransportError::Status { status } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, TransportError> {
        let body = json!({
            "model": self.settings.model,
            "temperature": self.settings.temperature,
            "messages": messages,
        })
        .to_string();
        let attempts = self.settings.network_attempts.max(1);
        let mut delay = Duration::from_millis(self.settings.backoff_initial_ms);
        let mut k = 0;
        loop {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err(e) if retryable(&e) && k + 1 < attempts => {
                    log::warn!("model request failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    k += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn requests(&self) -> usize {
        self.requests
    }

    fn secrets(&self) -> Vec<String> {
        vec![self.api_key.clone()]
    }
}

/// Canned responses consumed one per request.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StubTransport {
    pub responses: Vec<String>,
    #[serde(skip)]
    next: usize,
}

impl StubTransport {
    pub fn new(responses: Vec<String>) -> Self {
        StubTransport { responses, next: 0 }
    }

    /// Reads `{"responses": [...]}`.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

impl ChatTransport for StubTransport {
    fn complete(&mut self, _messages: &[ChatMessage]) -> Result<String, TransportError> {
        let r = self
            .responses
            .get(self.next)
            .cloned()
            .ok_or(TransportError::Exhausted(self.responses.len()));
        self.next += 1;
        r
    }

    fn requests(&self) -> usize {
        self.next
    }
}

/// Replaces every occurrence of each secret, plus anything following a
/// `Bearer ` prefix.
pub fn redact(text: &str, secrets: &[String]) -> String {
    let mut out = text.to_string();
    for s in secrets.iter().filter(|s| !s.is_empty()) {
        out = out.replace(s.as_str(), REDACTED);
    }
    let mut result = String::with_capacity(out.len());
    let mut rest = out.as_str();
    while let Some(i) = rest.find("Bearer ") {
        result.push_str(&rest[..i + 7]);
        rest = &rest[i + 7..];
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '"' || c == '\'')
            .unwrap_or(rest.len());
        if end > 0 && &rest[..end] != REDACTED {
            result.push_str(REDACTED);
        } else {
            result.push_str(&rest[..end]);
        }
        rest = &rest[end..];
    }
    result.push_str(rest);
    result
}

/// The contents of the first fenced code block, if any.
pub fn extract_fenced_block(text: &str) -> Option<String> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: Vec<ChatMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub requests: usize,
    pub temperature: Option<f64>,
}

impl Transcript {
    pub fn redacted(&self, secrets: &[String]) -> Transcript {
        let r = |s: &str| redact(s, secrets);
        Transcript {
            entries: self
                .entries
                .iter()
                .map(|e| TranscriptEntry {
                    request: e
                        .request
                        .iter()
                        .map(|m| ChatMessage::new(&m.role, r(&m.content)))
                        .collect(),
                    response: e.response.as_deref().map(r),
                    error: e.error.as_deref().map(r),
                })
                .collect(),
            requests: self.requests,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ProposerError {
    #[error("transport: {0}")]
    Transport(#[from] TransportError),
    #[error("no valid policy after {0} prompts")]
    Exhausted(usize),
}

#[derive(Debug)]
pub struct LlmOutcome {
    pub result: Result<PolicyDocument, ProposerError>,
    pub transcript: Transcript,
}

const SYSTEM_PROMPT: &str =
    "You design adaptive controller policies for variational quantum optimization experiments. \
     Answer with a single JSON policy document in a fenced block.";

/// Prompts until a document validates, feeding validation errors back.
pub fn llm_propose(
    ctx: &ProposalContext,
    transport: &mut dyn ChatTransport,
    temperature: Option<f64>,
) -> LlmOutcome {
    let mut messages = vec![
        ChatMessage::new("system", SYSTEM_PROMPT),
        ChatMessage::new("user", render_prompt(ctx)),
    ];
    let mut transcript = Transcript {
        temperature,
        ..Transcript::default()
    };
    let start = transport.requests();
    let finish = |transcript: &mut Transcript, transport: &dyn ChatTransport| {
        transcript.requests = transport.requests() - start;
    };
    for _ in 0..MAX_PROMPTS {
        let reply = match transport.complete(&messages) {
            Ok(r) => r,
            Err(e) => {
                transcript.entries.push(TranscriptEntry {
                    request: messages.clone(),
                    response: None,
                    error: Some(e.to_string()),
                });
                finish(&mut transcript, transport);
                return LlmOutcome {
                    result: Err(e.into()),
                    transcript,
                };
            }
        };
        transcript.entries.push(TranscriptEntry {
            request: messages.clone(),
            response: Some(reply.clone()),
            error: None,
        });
        let issues = match extract_fenced_block(&reply) {
            None => vec!["no fenced code block found".to_string()],
            Some(block) => match parse_policy(&block, ctx.max_attempts_cap) {
                Ok(doc) => {
                    finish(&mut transcript, transport);
                    return LlmOutcome {
                        result: Ok(doc),
                        transcript,
                    };
                }
                Err(issues) => issues.iter().map(ToString::to_string).collect(),
            },
        };
        messages.push(ChatMessage::new("assistant", reply));
        messages.push(ChatMessage::new(
            "user",
            format!(
                "The document was rejected:\n- {}\nReturn a corrected complete policy document in one ```json fenced block.",
                issues.join("\n- ")
            ),
        ));
    }
    finish(&mut transcript, transport);
    LlmOutcome {
        result: Err(ProposerError::Exhausted(MAX_PROMPTS)),
        transcript,
    }
}

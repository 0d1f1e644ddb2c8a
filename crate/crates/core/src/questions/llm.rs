//! Text-generation endpoint abstraction and the LLM question path.
//!
//! A [`TextGenerator`] turns a prompt into raw text. [`generate_llm_question`]
//! sends the prompt, validates the completion's grounding and falls back to
//! the taxonomy's template question on any failure. [`resolve_completion`] is
//! the pure half of that, used again when replaying logged completions.

use std::collections::HashMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::grounding::{validate_grounding, Lexicon, RejectionReason};
use super::prompt::PromptSpec;
use super::template::{render_template, TemplateError};
use super::{Grounding, Question, QuestionCatalog, QuestionSource};

pub const ENDPOINT_ENV: &str = "REFLECT_LLM_ENDPOINT";
pub const MODEL_ENV: &str = "REFLECT_LLM_MODEL";

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("no completion for prompt {0}")]
    NoFixture(String),
}

pub trait TextGenerator: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

/// SHA-256 of the prompt text, lower-case hex.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            base_url: "http://127.0.0.1:11434".into(),
            model: "llama3".into(),
            temperature: 0.0,
            timeout_secs: 10,
        }
    }
}

impl LlmSettings {
    /// Applies `REFLECT_LLM_ENDPOINT` / `REFLECT_LLM_MODEL` when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url;
            }
        }
        if let Ok(model) = std::env::var(MODEL_ENV) {
            if !model.trim().is_empty() {
                self.model = model;
            }
        }
        self
    }
}

/// OpenAI-compatible `POST {base_url}/v1/chat/completions` client.
pub struct HttpGenerator {
    settings: LlmSettings,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    stream: bool,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

impl HttpGenerator {
    pub fn new(settings: LlmSettings) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpGenerator { settings, client })
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }
}

impl TextGenerator for HttpGenerator {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let url = format!("{}/v1/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.settings.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.settings.temperature,
            stream: false,
        };
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                LlmError::Timeout
            } else {
                LlmError::Transport(e.to_string())
            }
        };
        let response = self.client.post(url).json(&body).send().map_err(classify)?;
        if !response.status().is_success() {
            return Err(LlmError::Status(response.status().as_u16()));
        }
        let parsed: ChatResponse = response.json().map_err(|e| LlmError::Decode(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Decode("no choices".into()))
    }
}

/// Deterministic generator backed by a prompt-hash → completion table.
#[derive(Debug, Clone, Default)]
pub struct StubGenerator {
    completions: HashMap<String, String>,
    fallback: Option<String>,
}

#[derive(Deserialize)]
struct FixtureLine {
    prompt_sha256: String,
    completion: String,
}

impl StubGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `completion` for every prompt without its own entry.
    pub fn always(completion: &str) -> Self {
        StubGenerator {
            completions: HashMap::new(),
            fallback: Some(completion.to_string()),
        }
    }

    pub fn with(mut self, prompt: &str, completion: &str) -> Self {
        self.completions.insert(prompt_hash(prompt), completion.to_string());
        self
    }

    /// Parses a fixture file: JSON lines of `{"prompt_sha256", "completion"}`;
    /// the hash `"*"` sets the completion for unmatched prompts.
    pub fn from_fixture(text: &str) -> Result<Self, serde_json::Error> {
        let mut stub = StubGenerator::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let entry: FixtureLine = serde_json::from_str(line)?;
            if entry.prompt_sha256 == "*" {
                stub.fallback = Some(entry.completion);
            } else {
                stub.completions.insert(entry.prompt_sha256.to_lowercase(), entry.completion);
            }
        }
        Ok(stub)
    }
}

impl TextGenerator for StubGenerator {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        self.completions
            .get(&hash)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or(LlmError::NoFixture(hash))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FallbackReason {
    TransportFailure { detail: String },
    Timeout,
    EmptyCompletion,
    GroundingRejected { reasons: Vec<RejectionReason> },
}

impl fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FallbackReason::TransportFailure { detail } => write!(f, "transport-failure: {detail}"),
            FallbackReason::Timeout => f.write_str("timeout"),
            FallbackReason::EmptyCompletion => f.write_str("empty-completion"),
            FallbackReason::GroundingRejected { reasons } => {
                let parts: Vec<String> = reasons.iter().map(ToString::to_string).collect();
                write!(f, "grounding-rejected: {}", parts.join("; "))
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("template fallback failed after {reason}: {source}")]
    FallbackExhausted {
        reason: FallbackReason,
        source: TemplateError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    /// Raw completion as returned by the endpoint.
    pub raw: Option<String>,
    pub transport_error: Option<LlmError>,
    /// Grounding verdict on the completion, when one was received.
    pub verdict: Option<Grounding>,
    pub fallback: Option<FallbackReason>,
    /// The question to surface; always grounding-accepted.
    pub question: Question,
}

/// Turns a completion (or transport error) into a surfaced question.
pub fn resolve_completion(
    prompt: &PromptSpec,
    completion: Result<String, LlmError>,
    catalog: &QuestionCatalog,
    lexicon: &Lexicon,
) -> Result<GenerationOutcome, GenerationError> {
    let (raw, transport_error) = match completion {
        Ok(text) => (Some(text), None),
        Err(e) => (None, Some(e)),
    };
    let mut verdict = None;
    let reason = match (&raw, &transport_error) {
        (_, Some(LlmError::Timeout)) => FallbackReason::Timeout,
        (_, Some(e)) => FallbackReason::TransportFailure { detail: e.to_string() },
        (Some(text), None) => {
            let text = text.trim();
            match validate_grounding(text, lexicon) {
                Err(_) => FallbackReason::EmptyCompletion,
                Ok(Grounding::Accepted) => {
                    return Ok(GenerationOutcome {
                        raw: raw.clone(),
                        transport_error: None,
                        verdict: Some(Grounding::Accepted),
                        fallback: None,
                        question: Question {
                            text: text.to_string(),
                            taxonomy_id: prompt.taxonomy_id.clone(),
                            template_id: None,
                            source: QuestionSource::Generated,
                            grounding: Grounding::Accepted,
                            inputs_used: Default::default(),
                            fallback_reason: None,
                        },
                    });
                }
                Ok(Grounding::Rejected(reasons)) => {
                    verdict = Some(Grounding::Rejected(reasons.clone()));
                    FallbackReason::GroundingRejected { reasons }
                }
            }
        }
        (None, None) => FallbackReason::EmptyCompletion,
    };

    tracing::warn!(taxonomy_id = %prompt.taxonomy_id, %reason, "falling back to template question");
    let fallback = catalog
        .template(&prompt.fallback_template)
        .and_then(|t| render_template(t, &prompt.fallback_inputs))
        .map_err(|source| GenerationError::FallbackExhausted {
            reason: reason.clone(),
            source,
        })?;
    Ok(GenerationOutcome {
        raw,
        transport_error,
        verdict,
        fallback: Some(reason.clone()),
        question: Question {
            fallback_reason: Some(reason.to_string()),
            ..fallback
        },
    })
}

pub fn generate_llm_question(
    prompt: &PromptSpec,
    client: &dyn TextGenerator,
    catalog: &QuestionCatalog,
    lexicon: &Lexicon,
) -> Result<GenerationOutcome, GenerationError> {
    resolve_completion(prompt, client.complete(&prompt.text), catalog, lexicon)
}

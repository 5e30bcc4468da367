//! Model-backend abstraction.
//!
//! A [`Backend`] answers a chat-style completion request and optionally
//! reports per-token log probabilities with top-k alternatives, which is all
//! the scoring layer needs. Three implementations ship here:
//!
//! * [`SyntheticBackend`]: a deterministic stand-in whose outputs are pure
//!   functions of the backend seed and the request, used by tests, the
//!   synthetic laboratory, and offline CLI runs;
//! * [`InstrumentedBackend`]: a wrapper counting calls and failures, used to
//!   verify how many model invocations a pipeline actually makes;
//! * [`HttpBackend`]: a client for OpenAI-compatible chat-completion
//!   servers. Credentials are read from an environment variable named in
//!   the configuration, never from the configuration value itself.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64_STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::seeded::{
    rng_from_seed, sample_categorical, stable_hash, standard_normal, uniform_f64,
};

/// Backend failures, split by whether the transport or the payload broke.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure talking to `{backend}`: {message}")]
    Transport { backend: String, message: String },
    #[error("backend `{backend}` returned malformed output: {message}")]
    Malformed { backend: String, message: String },
    #[error("credential environment variable `{var}` is not set")]
    MissingCredential { var: String },
}

/// Message author role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(&self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One piece of a multimodal message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MessagePart {
    Text { text: String },
    /// Remote image address passed through to the backend.
    ImageUrl { url: String },
    /// Inline image payload, base64 encoded.
    ImageData { media_type: String, base64: String },
}

impl MessagePart {
    pub fn text(text: impl Into<String>) -> Self {
        MessagePart::Text { text: text.into() }
    }

    pub fn image_url(url: impl Into<String>) -> Self {
        MessagePart::ImageUrl { url: url.into() }
    }

    /// Encodes raw image bytes for inline transport.
    pub fn image_from_bytes(media_type: impl Into<String>, bytes: &[u8]) -> Self {
        MessagePart::ImageData {
            media_type: media_type.into(),
            base64: BASE64_STANDARD.encode(bytes),
        }
    }
}

/// A chat message with ordered multimodal parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<MessagePart>,
}

impl Message {
    pub fn user_text(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            parts: vec![MessagePart::text(text)],
        }
    }

    pub fn user(parts: Vec<MessagePart>) -> Self {
        Message {
            role: Role::User,
            parts,
        }
    }
}

/// A completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub messages: Vec<Message>,
    /// Sampling temperature; zero means greedy decoding.
    pub temperature: f64,
    pub max_tokens: usize,
    /// Whether per-token log probabilities are requested.
    pub logprobs: bool,
    /// Number of alternatives reported per position when `logprobs` is on.
    pub top_logprobs: usize,
    /// Sampling seed distinguishing repeated stochastic draws of the same
    /// prompt; ignored by greedy decoding.
    pub sample_seed: Option<u64>,
}

impl BackendRequest {
    /// Greedy text-only request with log probabilities enabled.
    pub fn greedy(messages: Vec<Message>, max_tokens: usize, top_logprobs: usize) -> Self {
        BackendRequest {
            messages,
            temperature: 0.0,
            max_tokens,
            logprobs: true,
            top_logprobs,
            sample_seed: None,
        }
    }

    fn text_of(&self) -> String {
        let mut out = String::new();
        for message in &self.messages {
            for part in &message.parts {
                if let MessagePart::Text { text } = part {
                    if !out.is_empty() {
                        out.push('\n');
                    }
                    out.push_str(text);
                }
            }
        }
        out
    }
}

/// One generated token with its log probability and reported alternatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    /// Alternatives sorted by descending log probability.
    pub top: Vec<(String, f64)>,
}

/// A completion response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    /// Empty when the request did not ask for log probabilities.
    pub token_logprobs: Vec<TokenLogprob>,
}

/// A model capable of answering completion requests.
///
/// Implementations must be shareable across scoring threads.
pub trait Backend: Sync {
    /// Stable identifier used in logs and error messages.
    fn id(&self) -> &str;

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Prompt families the synthetic backend understands.
enum PromptShape {
    Binary {
        positive: &'static str,
        negative: &'static str,
    },
    MultipleChoice,
    FreeText,
}

fn detect_shape(text: &str) -> PromptShape {
    if text.contains("True or False") {
        PromptShape::Binary {
            positive: "True",
            negative: "False",
        }
    } else if text.contains("\"Yes\" or \"No\"") {
        PromptShape::Binary {
            positive: "Yes",
            negative: "No",
        }
    } else if text.contains("\"Helpful\" or \"Not helpful\"") {
        PromptShape::Binary {
            positive: "Helpful",
            negative: "Not helpful",
        }
    } else if text.contains("Answer with the option's letter") {
        PromptShape::MultipleChoice
    } else {
        PromptShape::FreeText
    }
}

/// Deterministic stand-in model.
///
/// Every response is a pure function of the backend seed and the request.
/// The underlying token distribution depends only on the seed and the
/// message contents; temperature and `sample_seed` affect only which token
/// is drawn from it, so repeated stochastic samples share one distribution
/// exactly like repeated sampling from a real model.
///
/// Prompt families are recognized from instruction phrases: binary probes
/// get a two-label distribution plus low-mass filler tokens, multiple-choice
/// prompts get a distribution over the letters A through D, and anything
/// else gets a short word sequence.
pub struct SyntheticBackend {
    id: String,
    seed: u64,
}

const FILLER_TOKENS: &[&str] = &["the", "it", "answer", "maybe", "image", "this"];
const FREE_TEXT_VOCAB: &[&str] = &[
    "black", "orange", "white", "grey", "band", "ring", "stripe", "pale", "dark", "yellow",
];

impl SyntheticBackend {
    pub fn new(seed: u64) -> Self {
        SyntheticBackend {
            id: format!("synthetic-{seed}"),
            seed,
        }
    }

    fn request_hash(&self, request: &BackendRequest, label: &str) -> u64 {
        let mut parts: Vec<Vec<u8>> = vec![self.seed.to_le_bytes().to_vec()];
        for message in &request.messages {
            parts.push(message.role.as_str().as_bytes().to_vec());
            for part in &message.parts {
                match part {
                    MessagePart::Text { text } => {
                        parts.push(b"text".to_vec());
                        parts.push(text.as_bytes().to_vec());
                    }
                    MessagePart::ImageUrl { url } => {
                        parts.push(b"image-url".to_vec());
                        parts.push(url.as_bytes().to_vec());
                    }
                    MessagePart::ImageData { media_type, base64 } => {
                        parts.push(b"image-data".to_vec());
                        parts.push(media_type.as_bytes().to_vec());
                        parts.push(base64.as_bytes().to_vec());
                    }
                }
            }
        }
        parts.push(label.as_bytes().to_vec());
        let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
        stable_hash(&refs)
    }

    fn sample_hash(&self, request: &BackendRequest) -> u64 {
        let base = self.request_hash(request, "sample");
        stable_hash(&[
            &base.to_le_bytes(),
            &request.temperature.to_bits().to_le_bytes(),
            &request.sample_seed.unwrap_or(0).to_le_bytes(),
        ])
    }

    /// Distribution over labelled tokens plus the drawn token index.
    fn draw(
        &self,
        request: &BackendRequest,
        tokens: &[String],
        probs: &[f64],
    ) -> usize {
        if request.temperature <= 0.0 {
            let mut best = 0;
            for i in 1..probs.len() {
                if probs[i] > probs[best] {
                    best = i;
                }
            }
            return best;
        }
        // Softmax at the requested temperature over the same distribution.
        let scaled: Vec<f64> = probs
            .iter()
            .map(|&p| (p.max(1e-12).ln() / request.temperature).exp())
            .collect();
        let norm: f64 = scaled.iter().sum();
        let scaled: Vec<f64> = scaled.iter().map(|&x| x / norm).collect();
        let mut rng = rng_from_seed(self.sample_hash(request));
        let _ = tokens;
        sample_categorical(&mut rng, &scaled)
    }

    fn binary_response(
        &self,
        request: &BackendRequest,
        positive: &str,
        negative: &str,
    ) -> BackendResponse {
        let mut rng = rng_from_seed(self.request_hash(request, "logits"));
        let margin = 2.0 * standard_normal(&mut rng);
        let p_pos = sigmoid(margin);
        // Labels keep 97% of the first-token mass; fillers share the rest in
        // a decreasing tail. The label odds ratio is unchanged, so
        // logistic(lp_pos - lp_neg) recovers p_pos exactly.
        let label_mass = 0.97;
        let mut tokens = vec![positive.to_string(), negative.to_string()];
        let mut probs = vec![label_mass * p_pos, label_mass * (1.0 - p_pos)];
        let mut filler_share = 1.0 - label_mass;
        for (i, filler) in FILLER_TOKENS.iter().enumerate() {
            let p = if i + 1 == FILLER_TOKENS.len() {
                filler_share
            } else {
                filler_share / 2.0
            };
            tokens.push((*filler).to_string());
            probs.push(p);
            filler_share -= p;
        }
        let chosen = self.draw(request, &tokens, &probs);
        finish_single_token(request, tokens, probs, chosen)
    }

    fn choice_response(&self, request: &BackendRequest) -> BackendResponse {
        let mut rng = rng_from_seed(self.request_hash(request, "logits"));
        let logits: Vec<f64> = (0..4).map(|_| 1.5 * standard_normal(&mut rng)).collect();
        let norm: f64 = logits.iter().map(|l| l.exp()).sum();
        let tokens: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let probs: Vec<f64> = logits.iter().map(|l| l.exp() / norm).collect();
        let chosen = self.draw(request, &tokens, &probs);
        finish_single_token(request, tokens, probs, chosen)
    }

    fn free_text_response(&self, request: &BackendRequest) -> BackendResponse {
        let mut rng = rng_from_seed(self.request_hash(request, "logits"));
        let length = (2 + (uniform_f64(&mut rng) * 3.0) as usize).min(request.max_tokens.max(1));
        let mut words = Vec::with_capacity(length);
        let mut token_logprobs = Vec::with_capacity(length);
        let mut sample_rng = rng_from_seed(self.sample_hash(request));
        for _ in 0..length {
            let greedy_index = (uniform_f64(&mut rng) * FREE_TEXT_VOCAB.len() as f64) as usize;
            let confidence = 0.4 + 0.55 * uniform_f64(&mut rng);
            let index = if request.temperature > 0.0 && uniform_f64(&mut sample_rng) > confidence
            {
                (uniform_f64(&mut sample_rng) * FREE_TEXT_VOCAB.len() as f64) as usize
            } else {
                greedy_index
            };
            let token = FREE_TEXT_VOCAB[index.min(FREE_TEXT_VOCAB.len() - 1)];
            let logprob = confidence.ln();
            if request.logprobs {
                let alternative = FREE_TEXT_VOCAB[(index + 1) % FREE_TEXT_VOCAB.len()];
                let top = if request.top_logprobs > 1 {
                    vec![
                        (token.to_string(), logprob),
                        (alternative.to_string(), (1.0 - confidence).max(1e-9).ln()),
                    ]
                } else {
                    vec![(token.to_string(), logprob)]
                };
                token_logprobs.push(TokenLogprob {
                    token: token.to_string(),
                    logprob,
                    top,
                });
            }
            words.push(token);
        }
        BackendResponse {
            text: words.join(" "),
            token_logprobs,
        }
    }
}

fn finish_single_token(
    request: &BackendRequest,
    tokens: Vec<String>,
    probs: Vec<f64>,
    chosen: usize,
) -> BackendResponse {
    let text = tokens[chosen].clone();
    if !request.logprobs {
        return BackendResponse {
            text,
            token_logprobs: Vec::new(),
        };
    }
    let mut ranked: Vec<(String, f64)> = tokens
        .into_iter()
        .zip(probs.iter().map(|&p| p.max(1e-12).ln()))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    let top: Vec<(String, f64)> = ranked
        .iter()
        .take(request.top_logprobs.max(1))
        .cloned()
        .collect();
    let logprob = probs[chosen].max(1e-12).ln();
    BackendResponse {
        text: text.clone(),
        token_logprobs: vec![TokenLogprob {
            token: text,
            logprob,
            top,
        }],
    }
}

impl Backend for SyntheticBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let text = request.text_of();
        Ok(match detect_shape(&text) {
            PromptShape::Binary { positive, negative } => {
                self.binary_response(request, positive, negative)
            }
            PromptShape::MultipleChoice => self.choice_response(request),
            PromptShape::FreeText => self.free_text_response(request),
        })
    }
}

/// Wrapper counting completed and failed calls to an inner backend.
pub struct InstrumentedBackend<B: Backend> {
    inner: B,
    calls: AtomicUsize,
    failures: AtomicUsize,
}

impl<B: Backend> InstrumentedBackend<B> {
    pub fn new(inner: B) -> Self {
        InstrumentedBackend {
            inner,
            calls: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        }
    }

    /// Total completion attempts, including failures.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.failures.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for InstrumentedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let result = self.inner.complete(request);
        if result.is_err() {
            self.failures.fetch_add(1, Ordering::SeqCst);
        }
        result
    }
}

/// Connection settings for an OpenAI-compatible chat-completion server.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Identifier used in logs and errors.
    pub id: String,
    /// Server base URL up to and including the API version prefix, for
    /// example `https://host:8000/v1`.
    pub base_url: String,
    /// Model name passed in the request body.
    pub model: String,
    /// Name of the environment variable holding the bearer token. `None`
    /// means the server needs no credential.
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Client for OpenAI-compatible chat-completion servers.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Builds the client, resolving the credential through the environment
    /// variable named in the configuration.
    pub fn new(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::MissingCredential { var: var.clone() }
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                backend: config.id.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
        })
    }
}

/// Serializes a request into an OpenAI-compatible chat-completion body.
pub fn build_request_body(model: &str, request: &BackendRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|message| {
            let content: Vec<Value> = message
                .parts
                .iter()
                .map(|part| match part {
                    MessagePart::Text { text } => json!({"type": "text", "text": text}),
                    MessagePart::ImageUrl { url } => {
                        json!({"type": "image_url", "image_url": {"url": url}})
                    }
                    MessagePart::ImageData { media_type, base64 } => json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{media_type};base64,{base64}")},
                    }),
                })
                .collect();
            json!({"role": message.role.as_str(), "content": content})
        })
        .collect();
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if request.logprobs {
        body["logprobs"] = json!(true);
        body["top_logprobs"] = json!(request.top_logprobs);
    }
    if let Some(seed) = request.sample_seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Parses an OpenAI-compatible chat-completion response body.
pub fn parse_response_body(backend: &str, body: &str) -> Result<BackendResponse, BackendError> {
    let malformed = |message: String| BackendError::Malformed {
        backend: backend.to_string(),
        message,
    };
    let value: Value =
        serde_json::from_str(body).map_err(|e| malformed(format!("invalid JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| malformed("no choices in response".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("choice has no message content".into()))?
        .to_string();
    let mut token_logprobs = Vec::new();
    if let Some(entries) = choice.pointer("/logprobs/content").and_then(Value::as_array) {
        for entry in entries {
            let token = entry
                .get("token")
                .and_then(Value::as_str)
                .ok_or_else(|| malformed("logprob entry has no token".into()))?
                .to_string();
            let logprob = entry
                .get("logprob")
                .and_then(Value::as_f64)
                .ok_or_else(|| malformed("logprob entry has no value".into()))?;
            let mut top = Vec::new();
            if let Some(alternatives) = entry.get("top_logprobs").and_then(Value::as_array) {
                for alt in alternatives {
                    let alt_token = alt
                        .get("token")
                        .and_then(Value::as_str)
                        .ok_or_else(|| malformed("alternative has no token".into()))?;
                    let alt_logprob = alt
                        .get("logprob")
                        .and_then(Value::as_f64)
                        .ok_or_else(|| malformed("alternative has no value".into()))?;
                    top.push((alt_token.to_string(), alt_logprob));
                }
            }
            top.sort_by(|a, b| b.1.total_cmp(&a.1));
            token_logprobs.push(TokenLogprob {
                token,
                logprob,
                top,
            });
        }
    }
    Ok(BackendResponse {
        text,
        token_logprobs,
    })
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = build_request_body(&self.config.model, request);
        let mut http_request = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            http_request = http_request.bearer_auth(key);
        }
        let response = http_request.send().map_err(|e| BackendError::Transport {
            backend: self.config.id.clone(),
            message: e.to_string(),
        })?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError::Transport {
            backend: self.config.id.clone(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(BackendError::Transport {
                backend: self.config.id.clone(),
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            });
        }
        parse_response_body(&self.config.id, &text)
    }
}

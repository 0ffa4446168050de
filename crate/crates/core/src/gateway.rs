//! Generation backends.
//!
//! Every LLM call in the engine goes through [`Backend::generate`]. Two
//! implementations ship here: [`MockBackend`], a scriptable rule table used
//! for offline tests and fixtures, and [`HttpBackend`], a blocking client for
//! chat-completion style endpoints.
//!
//! Backends are shared as [`BackendHandle`] (`Arc<dyn Backend>`) and are safe
//! to call from many threads at once. [`generate_h`] fans a batch of prompt
//! variants out concurrently and returns samples in variant order.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Default number of alternatives requested per token position.
pub const DEFAULT_TOP_K: u8 = 5;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("no scripted rule matches prompt (fixture gap): {excerpt:?}")]
    RuleMiss { excerpt: String },
    #[error("backend `{backend}` cannot return token probabilities")]
    TokenProbsUnsupported { backend: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("a sampled batch needs at least 2 variants, got {0}")]
    BatchTooSmall(usize),
    #[error("variant {index} failed: {source}")]
    BatchFailed {
        index: usize,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("reading fixture {path}: {message}")]
    Fixture { path: String, message: String },
}

impl GatewayError {
    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport { .. } => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub want_token_probs: bool,
    #[serde(default)]
    pub stop_markers: Vec<String>,
    /// Position of this request inside a sampled batch. Scripted backends use
    /// it to pick a response; it is never sent over the wire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u64>,
}

impl PromptRequest {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            temperature: 0.0,
            max_tokens: 64,
            want_token_probs: false,
            stop_markers: Vec::new(),
            sample_index: None,
        }
    }

    pub fn temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_token_probs(mut self, want: bool) -> Self {
        self.want_token_probs = want;
        self
    }

    pub fn stop_markers(mut self, markers: Vec<String>) -> Self {
        self.stop_markers = markers;
        self
    }

    pub fn sample_index(mut self, index: u64) -> Self {
        self.sample_index = Some(index);
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.text.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt text is empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be finite and non-negative, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// One alternative at a token position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAlt {
    pub token: String,
    pub prob: f64,
}

/// The emitted token at one position, its probability, and the top-K
/// alternatives the backend reported for that position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPosition {
    pub token: String,
    pub prob: f64,
    #[serde(default)]
    pub top: Vec<TokenAlt>,
}

impl TokenPosition {
    pub fn validate(&self) -> Result<(), String> {
        let in_range = |p: f64| p > 0.0 && p <= 1.0;
        if !in_range(self.prob) {
            return Err(format!("token {:?} has probability {} outside (0, 1]", self.token, self.prob));
        }
        let mut sum = 0.0;
        for alt in &self.top {
            if !in_range(alt.prob) {
                return Err(format!("alternative {:?} has probability {} outside (0, 1]", alt.token, alt.prob));
            }
            sum += alt.prob;
        }
        if sum > 1.0 + 1e-6 {
            return Err(format!("top-K probabilities at token {:?} sum to {sum}", self.token));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_probs: Option<Vec<TokenPosition>>,
    pub backend_id: String,
    pub latency_ms: u64,
}

impl GenerationSample {
    /// A sample with no token probabilities, mainly for tests.
    pub fn from_text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            token_probs: None,
            backend_id: "inline".into(),
            latency_ms: 0,
        }
    }

    pub fn with_token_probs(mut self, probs: Vec<TokenPosition>) -> Self {
        self.token_probs = Some(probs);
        self
    }
}

pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Whether token probabilities can be requested.
    fn supports_token_probs(&self) -> bool;

    /// Produce one completion for `request`.
    fn generate(&self, request: &PromptRequest) -> Result<GenerationSample, GatewayError>;

    /// A handle with the same configuration and fresh per-instance state.
    ///
    /// Scripted backends reset their cycling counters; network backends may
    /// share the underlying connection pool.
    fn fork(&self) -> BackendHandle;
}

pub type BackendHandle = Arc<dyn Backend>;

/// Validate `request` and run it on `backend`.
pub fn generate(request: &PromptRequest, backend: &dyn Backend) -> Result<GenerationSample, GatewayError> {
    request.validate()?;
    backend.generate(request)
}

/// Issue every variant concurrently. `result[i]` always answers `variants[i]`.
///
/// If several variants fail, the error names the lowest failing index.
pub fn generate_h(variants: &[PromptRequest], backend: &dyn Backend) -> Result<Vec<GenerationSample>, GatewayError> {
    if variants.len() < 2 {
        return Err(GatewayError::BatchTooSmall(variants.len()));
    }
    let results: Vec<Result<GenerationSample, GatewayError>> = thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|request| scope.spawn(move || generate(request, backend)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(GatewayError::InvalidResponse("generation thread panicked".into())))
            })
            .collect()
    });
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|source| GatewayError::BatchFailed {
                index,
                source: Box::new(source),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Substring pattern: a single string, or a list that must all be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatchPattern {
    One(String),
    All(Vec<String>),
}

impl MatchPattern {
    pub fn matches(&self, text: &str) -> bool {
        match self {
            MatchPattern::One(s) => text.contains(s.as_str()),
            MatchPattern::All(parts) => parts.iter().all(|p| text.contains(p.as_str())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// `sample_index % len` when the request carries an index, otherwise a
    /// per-rule counter.
    #[default]
    Cycle,
    /// Uniform draw keyed by (backend seed, prompt text, sample index).
    Seeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRule {
    #[serde(rename = "match")]
    pub pattern: MatchPattern,
    pub responses: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canned_probs: Option<Vec<Vec<TokenPosition>>>,
    #[serde(default)]
    pub selection: Selection,
    /// Artificial latency applied before answering.
    #[serde(default)]
    pub delay_ms: u64,
}

impl ScriptedRule {
    pub fn new(pattern: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            pattern: MatchPattern::One(pattern.into()),
            responses,
            canned_probs: None,
            selection: Selection::Cycle,
            delay_ms: 0,
        }
    }

    pub fn all_of(parts: Vec<String>, responses: Vec<String>) -> Self {
        Self {
            pattern: MatchPattern::All(parts),
            ..Self::new(String::new(), responses)
        }
    }

    pub fn with_probs(mut self, probs: Vec<Vec<TokenPosition>>) -> Self {
        self.canned_probs = Some(probs);
        self
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    fn validate(&self, index: usize) -> Result<(), GatewayError> {
        if self.responses.is_empty() {
            return Err(GatewayError::Config(format!("rule {index} has no responses")));
        }
        if let Some(probs) = &self.canned_probs {
            if probs.len() != self.responses.len() {
                return Err(GatewayError::Config(format!(
                    "rule {index}: {} canned probability tables for {} responses",
                    probs.len(),
                    self.responses.len()
                )));
            }
            for table in probs {
                for pos in table {
                    pos.validate()
                        .map_err(|e| GatewayError::Config(format!("rule {index}: {e}")))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct RuleSlot {
    rule: ScriptedRule,
    counter: AtomicUsize,
}

/// Deterministic rule-table backend. The first rule whose pattern matches the
/// prompt answers it.
#[derive(Debug)]
pub struct MockBackend {
    id: String,
    seed: u64,
    rules: Arc<Vec<ScriptedRule>>,
    slots: Vec<RuleSlot>,
}

impl MockBackend {
    pub fn new(rules: Vec<ScriptedRule>, seed: u64) -> Result<Self, GatewayError> {
        for (i, rule) in rules.iter().enumerate() {
            rule.validate(i)?;
        }
        Ok(Self::from_shared(Arc::new(rules), seed))
    }

    fn from_shared(rules: Arc<Vec<ScriptedRule>>, seed: u64) -> Self {
        let slots = rules
            .iter()
            .map(|rule| RuleSlot {
                rule: rule.clone(),
                counter: AtomicUsize::new(0),
            })
            .collect();
        Self {
            id: "mock".into(),
            seed,
            rules,
            slots,
        }
    }

    /// Load rules from a JSON fixture: `[{match, responses, canned_probs?}]`.
    pub fn from_file(path: impl AsRef<Path>, seed: u64) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let fixture_err = |message: String| GatewayError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| fixture_err(e.to_string()))?;
        let rules: Vec<ScriptedRule> = serde_json::from_str(&text).map_err(|e| fixture_err(e.to_string()))?;
        Self::new(rules, seed)
    }

    pub fn rules(&self) -> &[ScriptedRule] {
        &self.rules
    }

    fn pick(&self, slot: &RuleSlot, request: &PromptRequest) -> usize {
        let len = slot.rule.responses.len();
        match (slot.rule.selection, request.sample_index) {
            (Selection::Cycle, Some(i)) => (i % len as u64) as usize,
            (Selection::Cycle, None) => slot.counter.fetch_add(1, Ordering::SeqCst) % len,
            (Selection::Seeded, index) => {
                let key = self.seed ^ fnv1a(request.text.as_bytes()) ^ index.unwrap_or(u64::MAX).rotate_left(17);
                ChaCha8Rng::seed_from_u64(key).random_range(0..len)
            }
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_token_probs(&self) -> bool {
        !self.slots.is_empty() && self.slots.iter().all(|s| s.rule.canned_probs.is_some())
    }

    fn generate(&self, request: &PromptRequest) -> Result<GenerationSample, GatewayError> {
        let started = Instant::now();
        let slot = self
            .slots
            .iter()
            .find(|s| s.rule.pattern.matches(&request.text))
            .ok_or_else(|| GatewayError::RuleMiss {
                excerpt: excerpt(&request.text),
            })?;
        let choice = self.pick(slot, request);
        let token_probs = if request.want_token_probs {
            let table = slot
                .rule
                .canned_probs
                .as_ref()
                .and_then(|p| p.get(choice))
                .ok_or_else(|| GatewayError::TokenProbsUnsupported { backend: self.id.clone() })?;
            Some(table.clone())
        } else {
            None
        };
        if slot.rule.delay_ms > 0 {
            thread::sleep(Duration::from_millis(slot.rule.delay_ms));
        }
        Ok(GenerationSample {
            text: slot.rule.responses[choice].clone(),
            token_probs,
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn fork(&self) -> BackendHandle {
        Arc::new(Self::from_shared(Arc::clone(&self.rules), self.seed))
    }
}

fn excerpt(text: &str) -> String {
    let tail: String = text.chars().rev().take(120).collect::<Vec<_>>().into_iter().rev().collect();
    if tail.len() < text.len() {
        format!("...{tail}")
    } else {
        tail
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `POST {base}/chat/completions` with a `messages` list.
    #[default]
    Chat,
    /// `POST {base}/completions` with a raw `prompt`.
    Completions,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_true() -> bool {
    true
}
fn default_top_k() -> u8 {
    DEFAULT_TOP_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env_var: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default = "default_true")]
    pub supports_logprobs: bool,
    #[serde(default = "default_top_k")]
    pub top_k: u8,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key_env_var: None,
            timeout_ms: default_timeout_ms(),
            api_style: ApiStyle::Chat,
            supports_logprobs: true,
            top_k: DEFAULT_TOP_K,
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("base_url", &self.config.base_url)
            .field("model", &self.config.model_name)
            .field("has_api_key", &self.api_key.is_some())
            .finish()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        if config.max_attempts == 0 {
            return Err(GatewayError::Config("max_attempts must be at least 1".into()));
        }
        let api_key = match &config.api_key_env_var {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            id: format!("http:{}", config.model_name),
            config,
            api_key,
            agent,
        })
    }

    fn endpoint(&self) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match self.config.api_style {
            ApiStyle::Chat => format!("{base}/chat/completions"),
            ApiStyle::Completions => format!("{base}/completions"),
        }
    }

    /// Request body for the configured API style.
    pub fn request_body(&self, request: &PromptRequest) -> Value {
        let mut body = json!({
            "model": self.config.model_name,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        match self.config.api_style {
            ApiStyle::Chat => {
                body["messages"] = json!([{ "role": "user", "content": request.text }]);
                if request.want_token_probs {
                    body["logprobs"] = json!(true);
                    body["top_logprobs"] = json!(self.config.top_k);
                }
            }
            ApiStyle::Completions => {
                body["prompt"] = json!(request.text);
                if request.want_token_probs {
                    body["logprobs"] = json!(self.config.top_k);
                }
            }
        }
        if !request.stop_markers.is_empty() {
            body["stop"] = json!(request.stop_markers);
        }
        body
    }

    fn send_once(&self, body: &str) -> Result<String, GatewayError> {
        let mut call = self.agent.post(&self.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call.send(body).map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| GatewayError::Transport {
                attempts: 1,
                message: e.to_string(),
            })?;
        if (200..300).contains(&status) {
            Ok(text)
        } else {
            Err(GatewayError::Status { status, body: text })
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn supports_token_probs(&self) -> bool {
        self.config.supports_logprobs
    }

    fn generate(&self, request: &PromptRequest) -> Result<GenerationSample, GatewayError> {
        if request.want_token_probs && !self.config.supports_logprobs {
            return Err(GatewayError::TokenProbsUnsupported { backend: self.id.clone() });
        }
        let started = Instant::now();
        let body = self.request_body(request).to_string();
        let mut attempt = 0;
        let raw = loop {
            attempt += 1;
            match self.send_once(&body) {
                Ok(text) => break text,
                Err(e) if e.is_retryable() && attempt < self.config.max_attempts => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1));
                    tracing::warn!(attempt, wait_ms = wait, error = %e, "retrying generation request");
                    thread::sleep(Duration::from_millis(wait));
                }
                Err(GatewayError::Transport { message, .. }) => {
                    return Err(GatewayError::Transport { attempts: attempt, message })
                }
                Err(e) if e.is_retryable() => {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        };
        let value: Value =
            serde_json::from_str(&raw).map_err(|e| GatewayError::InvalidResponse(format!("not JSON: {e}")))?;
        let (text, token_probs) = parse_completion(&value, self.config.api_style)?;
        if request.want_token_probs && token_probs.is_none() {
            return Err(GatewayError::InvalidResponse("token probabilities requested but absent".into()));
        }
        Ok(GenerationSample {
            text,
            token_probs: if request.want_token_probs { token_probs } else { None },
            backend_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn fork(&self) -> BackendHandle {
        Arc::new(Self {
            id: self.id.clone(),
            config: self.config.clone(),
            api_key: self.api_key.clone(),
            agent: self.agent.clone(),
        })
    }
}

/// Extract the first choice's text and, when present, its token log-probabilities.
pub fn parse_completion(value: &Value, style: ApiStyle) -> Result<(String, Option<Vec<TokenPosition>>), GatewayError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::InvalidResponse("missing choices[0]".into()))?;
    match style {
        ApiStyle::Chat => {
            let text = choice
                .pointer("/message/content")
                .and_then(Value::as_str)
                .ok_or_else(|| GatewayError::InvalidResponse("missing choices[0].message.content".into()))?;
            let probs = match choice.pointer("/logprobs/content").and_then(Value::as_array) {
                Some(items) => Some(items.iter().map(chat_position).collect::<Result<Vec<_>, _>>()?),
                None => None,
            };
            Ok((text.to_string(), probs))
        }
        ApiStyle::Completions => {
            let text = choice
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| GatewayError::InvalidResponse("missing choices[0].text".into()))?;
            let probs = match choice.get("logprobs").filter(|v| !v.is_null()) {
                Some(lp) => Some(completion_positions(lp)?),
                None => None,
            };
            Ok((text.to_string(), probs))
        }
    }
}

fn bad(what: &str) -> GatewayError {
    GatewayError::InvalidResponse(format!("malformed logprobs: {what}"))
}

fn finish_position(token: String, logprob: f64, mut top: Vec<TokenAlt>) -> TokenPosition {
    // Rounded log-probabilities can push the top-K mass marginally above 1.
    let sum: f64 = top.iter().map(|a| a.prob).sum();
    if sum > 1.0 {
        for alt in &mut top {
            alt.prob /= sum;
        }
    }
    TokenPosition {
        token,
        prob: logprob.exp().min(1.0),
        top,
    }
}

fn chat_position(item: &Value) -> Result<TokenPosition, GatewayError> {
    let token = item.get("token").and_then(Value::as_str).ok_or_else(|| bad("token"))?;
    let logprob = item.get("logprob").and_then(Value::as_f64).ok_or_else(|| bad("logprob"))?;
    let top = match item.get("top_logprobs").and_then(Value::as_array) {
        Some(alts) => alts
            .iter()
            .map(|a| {
                let t = a.get("token").and_then(Value::as_str).ok_or_else(|| bad("top token"))?;
                let lp = a.get("logprob").and_then(Value::as_f64).ok_or_else(|| bad("top logprob"))?;
                Ok(TokenAlt {
                    token: t.to_string(),
                    prob: lp.exp(),
                })
            })
            .collect::<Result<Vec<_>, GatewayError>>()?,
        None => Vec::new(),
    };
    Ok(finish_position(token.to_string(), logprob, top))
}

fn completion_positions(lp: &Value) -> Result<Vec<TokenPosition>, GatewayError> {
    let tokens = lp.get("tokens").and_then(Value::as_array).ok_or_else(|| bad("tokens"))?;
    let logprobs = lp.get("token_logprobs").and_then(Value::as_array).ok_or_else(|| bad("token_logprobs"))?;
    if tokens.len() != logprobs.len() {
        return Err(bad("tokens and token_logprobs differ in length"));
    }
    let tops = lp.get("top_logprobs").and_then(Value::as_array);
    tokens
        .iter()
        .zip(logprobs)
        .enumerate()
        .map(|(i, (t, l))| {
            let token = t.as_str().ok_or_else(|| bad("token"))?;
            let logprob = l.as_f64().ok_or_else(|| bad("token_logprob"))?;
            let mut top: Vec<TokenAlt> = match tops.and_then(|t| t.get(i)).and_then(Value::as_object) {
                Some(map) => map
                    .iter()
                    .map(|(k, v)| {
                        Ok(TokenAlt {
                            token: k.clone(),
                            prob: v.as_f64().ok_or_else(|| bad("top logprob"))?.exp(),
                        })
                    })
                    .collect::<Result<_, GatewayError>>()?,
                None => Vec::new(),
            };
            top.sort_by(|a, b| b.prob.total_cmp(&a.prob));
            Ok(finish_position(token.to_string(), logprob, top))
        })
        .collect()
}

//! Pluggable chat-model access.
//!
//! A pool of chat-completion endpoints answers every production query; each
//! endpoint is backed either by a real HTTP service speaking the de facto
//! `/chat/completions` JSON shape or by the deterministic stub backend used
//! for tests and offline runs. The stub is a pure function of (messages,
//! stub config), which is what makes full pipeline runs reproducible.
//!
//! Auth tokens are resolved from the environment at request time and never
//! serialized; configs carry only the variable name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec;
use crate::taxonomy::{Message, Role};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("pool config: {0}")]
    Config(String),
    #[error("unknown endpoint id: {0}")]
    UnknownEndpoint(String),
    #[error("reading pool config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing pool config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

// ---------------------------------------------------------------------------
// Endpoints and responses
// ---------------------------------------------------------------------------

fn default_temperature() -> f64 {
    0.3
}

fn default_top_p() -> f64 {
    0.95
}

/// Default sampling parameters sent on the wire when a call does not
/// override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 0.3,
            top_p: 0.95,
            max_tokens: None,
        }
    }
}

/// One pool member. `auth_env` names an environment variable; the token
/// itself never appears in any config or trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_model_name")]
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env: Option<String>,
    #[serde(flatten)]
    pub params: SamplingParams,
}

fn default_model_name() -> String {
    "stub".to_string()
}

impl ModelEndpoint {
    fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.params.temperature) {
            return Err(GatewayError::Config(format!(
                "endpoint {}: temperature {} outside [0, 2]",
                self.id, self.params.temperature
            )));
        }
        if !(self.params.top_p > 0.0 && self.params.top_p <= 1.0) {
            return Err(GatewayError::Config(format!(
                "endpoint {}: top_p {} outside (0, 1]",
                self.id, self.params.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    LengthCapped,
    Error,
}

/// One pool member's answer to a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub endpoint_id: String,
    pub text: String,
    pub finish: FinishReason,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CandidateResponse {
    pub fn is_error(&self) -> bool {
        self.finish == FinishReason::Error
    }
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum BackendError {
    /// Timeouts and 5xx-class failures; worth another attempt.
    Retryable(String),
    /// Anything a retry cannot fix.
    Permanent(String),
}

impl BackendError {
    fn cause(&self) -> &str {
        match self {
            BackendError::Retryable(c) | BackendError::Permanent(c) => c,
        }
    }
}

pub struct BackendReply {
    pub text: String,
    pub finish: FinishReason,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        endpoint: &ModelEndpoint,
        messages: &[Message],
        params: &SamplingParams,
    ) -> Result<BackendReply, BackendError>;
}

// --- HTTP ------------------------------------------------------------------

struct HttpBackend {
    agent: ureq::Agent,
}

impl HttpBackend {
    fn new(timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        HttpBackend { agent }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        endpoint: &ModelEndpoint,
        messages: &[Message],
        params: &SamplingParams,
    ) -> Result<BackendReply, BackendError> {
        let url = endpoint.base_url.as_deref().ok_or_else(|| {
            BackendError::Permanent(format!("endpoint {} has no base_url", endpoint.id))
        })?;
        let body = serde_json::json!({
            "model": endpoint.model,
            "messages": messages,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        });
        let mut request = self.agent.post(url).set("content-type", "application/json");
        if let Some(var) = &endpoint.auth_env {
            if let Ok(token) = std::env::var(var) {
                request = request.set("authorization", &format!("Bearer {token}"));
            }
        }
        let response = match request.send_json(body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                let cause = format!(
                    "http {code}: {}",
                    detail.chars().take(200).collect::<String>()
                );
                return if code >= 500 {
                    Err(BackendError::Retryable(cause))
                } else {
                    Err(BackendError::Permanent(cause))
                };
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(BackendError::Retryable(format!("transport: {t}")));
            }
        };
        let value: serde_json::Value = response
            .into_json()
            .map_err(|e| BackendError::Permanent(format!("malformed response body: {e}")))?;
        let choice = &value["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| {
                BackendError::Permanent("response missing choices[0].message.content".into())
            })?
            .to_string();
        let finish = match choice["finish_reason"].as_str() {
            Some("length") => FinishReason::LengthCapped,
            _ => FinishReason::Complete,
        };
        Ok(BackendReply {
            text,
            finish,
            prompt_tokens: value["usage"]["prompt_tokens"].as_u64(),
            completion_tokens: value["usage"]["completion_tokens"].as_u64(),
        })
    }
}

// --- Stub ------------------------------------------------------------------

/// Deterministic fingerprint of a prompt; the stub's only source of
/// "randomness", so identical prompts always get identical replies.
pub fn messages_fingerprint(messages: &[Message]) -> u64 {
    let mut hasher = Sha256::new();
    for message in messages {
        let role = match message.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        hasher.update(role.as_bytes());
        hasher.update([0x1f]);
        hasher.update(message.content.as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    u64::from_be_bytes(digest[..8].try_into().unwrap())
}

/// Canned-reply generator for one stub rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StubReply {
    /// Always the same text; `truncated` marks it length-capped.
    Fixed {
        text: String,
        #[serde(default)]
        truncated: bool,
    },
    /// Replies with the last user message verbatim.
    EchoLastUser,
    /// Picks one choice by prompt fingerprint.
    HashPick { choices: Vec<String> },
    /// Fixed text with `{hash8}` replaced by 8 hex digits of the fingerprint.
    Templated { text: String },
    /// Emits "…\nScore: N" with N drawn fingerprint-weighted from `weights`.
    Scored { weights: BTreeMap<String, u32> },
    /// Simulates an endpoint failure.
    Fail { message: String },
}

/// A stub rule fires when every present matcher matches the prompt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_user_contains: Option<String>,
    pub reply: StubReply,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubSpec {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default = "default_stub_reply")]
    pub default: StubReply,
}

fn default_stub_reply() -> StubReply {
    StubReply::EchoLastUser
}

impl Default for StubSpec {
    fn default() -> Self {
        StubSpec {
            rules: Vec::new(),
            default: default_stub_reply(),
        }
    }
}

struct StubBackend {
    spec: StubSpec,
}

impl StubBackend {
    fn select_reply<'a>(&'a self, messages: &[Message]) -> &'a StubReply {
        let system: String = messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or_default();
        for rule in self.rules() {
            let system_ok = rule
                .system_contains
                .as_deref()
                .map(|needle| system.contains(needle))
                .unwrap_or(true);
            let user_ok = rule
                .last_user_contains
                .as_deref()
                .map(|needle| last_user.contains(needle))
                .unwrap_or(true);
            if system_ok && user_ok {
                return &rule.reply;
            }
        }
        &self.spec.default
    }

    fn rules(&self) -> &[StubRule] {
        &self.spec.rules
    }
}

fn weighted_pick(weights: &BTreeMap<String, u32>, fingerprint: u64) -> &str {
    let total: u64 = weights.values().map(|w| *w as u64).sum();
    if total == 0 {
        return "5";
    }
    let mut point = fingerprint % total;
    for (key, weight) in weights {
        let weight = *weight as u64;
        if point < weight {
            return key;
        }
        point -= weight;
    }
    weights
        .keys()
        .next_back()
        .map(String::as_str)
        .unwrap_or("5")
}

impl ChatBackend for StubBackend {
    fn complete(
        &self,
        _endpoint: &ModelEndpoint,
        messages: &[Message],
        params: &SamplingParams,
    ) -> Result<BackendReply, BackendError> {
        let fingerprint = messages_fingerprint(messages);
        let (mut text, mut finish) = match self.select_reply(messages) {
            StubReply::Fixed { text, truncated } => (
                text.clone(),
                if *truncated {
                    FinishReason::LengthCapped
                } else {
                    FinishReason::Complete
                },
            ),
            StubReply::EchoLastUser => {
                let last = messages
                    .iter()
                    .rev()
                    .find(|m| m.role == Role::User)
                    .map(|m| m.content.clone())
                    .unwrap_or_default();
                (last, FinishReason::Complete)
            }
            StubReply::HashPick { choices } => {
                if choices.is_empty() {
                    return Err(BackendError::Permanent("hash_pick with no choices".into()));
                }
                let idx = (fingerprint % choices.len() as u64) as usize;
                (choices[idx].clone(), FinishReason::Complete)
            }
            StubReply::Templated { text } => {
                let tag = format!("{:08x}", fingerprint >> 32);
                (text.replace("{hash8}", &tag), FinishReason::Complete)
            }
            StubReply::Scored { weights } => {
                let score = weighted_pick(weights, fingerprint);
                (
                    format!(
                        "The answer follows the requested structure and addresses the question.\nScore: {score}"
                    ),
                    FinishReason::Complete,
                )
            }
            StubReply::Fail { message } => {
                return Err(BackendError::Permanent(message.clone()));
            }
        };
        // max_tokens is approximated as a 4-chars-per-token budget.
        if let Some(max_tokens) = params.max_tokens {
            let budget = max_tokens as usize * 4;
            if text.chars().count() > budget {
                text = text.chars().take(budget).collect();
                finish = FinishReason::LengthCapped;
            }
        }
        Ok(BackendReply {
            text,
            finish,
            prompt_tokens: None,
            completion_tokens: None,
        })
    }
}

// ---------------------------------------------------------------------------
// Pool configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    #[serde(flatten)]
    pub endpoint: ModelEndpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stub: Option<StubSpec>,
}

/// Auxiliary role bindings; every unset role falls back to the first
/// endpoint in the catalog.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoleBindings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responder: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_filter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolConfig {
    pub endpoints: Vec<EndpointConfig>,
    /// Response-generator subset (defaults to every endpoint, in order).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<String>>,
    #[serde(default)]
    pub roles: RoleBindings,
    /// Per-request timeout for HTTP endpoints, seconds.
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Base delay for exponential retry backoff, milliseconds.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_backoff_ms() -> u64 {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayRole {
    Responder,
    Classifier,
    QueryGenerator,
    QueryFilter,
    Judge,
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

const MAX_ATTEMPTS: u32 = 3;

struct Entry {
    endpoint: ModelEndpoint,
    backend: Arc<dyn ChatBackend>,
}

/// Shared handle over the endpoint catalog: per-endpoint completion with
/// retry, role dispatch, and whole-pool fan-out.
pub struct Gateway {
    entries: Vec<Entry>,
    by_id: BTreeMap<String, usize>,
    pool: Vec<usize>,
    roles: [usize; 5],
    backoff: Duration,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field(
                "endpoints",
                &self
                    .entries
                    .iter()
                    .map(|e| &e.endpoint.id)
                    .collect::<Vec<_>>(),
            )
            .field("pool", &self.pool)
            .finish()
    }
}

impl Gateway {
    pub fn from_config(config: PoolConfig) -> Result<Self, GatewayError> {
        if config.endpoints.is_empty() {
            return Err(GatewayError::Config("pool has no endpoints".into()));
        }
        let timeout = Duration::from_secs(config.timeout_secs);
        let mut entries = Vec::new();
        let mut by_id = BTreeMap::new();
        for ep in config.endpoints {
            ep.endpoint.validate()?;
            if by_id.contains_key(&ep.endpoint.id) {
                return Err(GatewayError::Config(format!(
                    "duplicate endpoint id {}",
                    ep.endpoint.id
                )));
            }
            let backend: Arc<dyn ChatBackend> = match ep.stub {
                Some(spec) => Arc::new(StubBackend { spec }),
                None => {
                    if ep.endpoint.base_url.is_none() {
                        return Err(GatewayError::Config(format!(
                            "endpoint {} needs base_url or a stub spec",
                            ep.endpoint.id
                        )));
                    }
                    Arc::new(HttpBackend::new(timeout))
                }
            };
            by_id.insert(ep.endpoint.id.clone(), entries.len());
            entries.push(Entry {
                endpoint: ep.endpoint,
                backend,
            });
        }

        let resolve = |id: &Option<String>| -> Result<usize, GatewayError> {
            match id {
                Some(id) => by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| GatewayError::UnknownEndpoint(id.clone())),
                None => Ok(0),
            }
        };
        let roles = [
            resolve(&config.roles.responder)?,
            resolve(&config.roles.classifier)?,
            resolve(&config.roles.query_generator)?,
            resolve(&config.roles.query_filter)?,
            resolve(&config.roles.judge)?,
        ];

        let pool = match config.pool {
            Some(ids) => {
                if ids.is_empty() {
                    return Err(GatewayError::Config("pool list is empty".into()));
                }
                ids.iter()
                    .map(|id| {
                        by_id
                            .get(id)
                            .copied()
                            .ok_or_else(|| GatewayError::UnknownEndpoint(id.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
            None => (0..entries.len()).collect(),
        };

        Ok(Gateway {
            entries,
            by_id,
            pool,
            roles,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    pub fn from_config_file(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path).map_err(|source| GatewayError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: PoolConfig =
            serde_json::from_str(&raw).map_err(|source| GatewayError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_config(config)
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    pub fn pool_endpoint_ids(&self) -> Vec<String> {
        self.pool
            .iter()
            .map(|&i| self.entries[i].endpoint.id.clone())
            .collect()
    }

    pub fn endpoint_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.endpoint.id.clone()).collect()
    }

    fn role_index(&self, role: GatewayRole) -> usize {
        match role {
            GatewayRole::Responder => self.roles[0],
            GatewayRole::Classifier => self.roles[1],
            GatewayRole::QueryGenerator => self.roles[2],
            GatewayRole::QueryFilter => self.roles[3],
            GatewayRole::Judge => self.roles[4],
        }
    }

    fn complete_entry(
        &self,
        idx: usize,
        messages: &[Message],
        params: Option<&SamplingParams>,
    ) -> CandidateResponse {
        let entry = &self.entries[idx];
        let effective = params.unwrap_or(&entry.endpoint.params);
        let started = Instant::now();
        let mut cause = String::new();
        for attempt in 0..MAX_ATTEMPTS {
            match entry.backend.complete(&entry.endpoint, messages, effective) {
                Ok(reply) => {
                    return CandidateResponse {
                        endpoint_id: entry.endpoint.id.clone(),
                        text: reply.text,
                        finish: reply.finish,
                        latency_ms: started.elapsed().as_millis() as u64,
                        prompt_tokens: reply.prompt_tokens,
                        completion_tokens: reply.completion_tokens,
                        error: None,
                    };
                }
                Err(BackendError::Permanent(c)) => {
                    cause = c;
                    break;
                }
                Err(err @ BackendError::Retryable(_)) => {
                    cause = err.cause().to_string();
                    if attempt + 1 < MAX_ATTEMPTS {
                        std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    }
                }
            }
        }
        CandidateResponse {
            endpoint_id: entry.endpoint.id.clone(),
            text: String::new(),
            finish: FinishReason::Error,
            latency_ms: started.elapsed().as_millis() as u64,
            prompt_tokens: None,
            completion_tokens: None,
            error: Some(cause),
        }
    }

    /// Completes against one endpoint by id, with retry and backoff.
    /// Exhausted retries surface as an error-finish candidate, never a panic.
    pub fn complete(
        &self,
        endpoint_id: &str,
        messages: &[Message],
        params: Option<&SamplingParams>,
    ) -> Result<CandidateResponse, GatewayError> {
        let idx = self
            .by_id
            .get(endpoint_id)
            .copied()
            .ok_or_else(|| GatewayError::UnknownEndpoint(endpoint_id.to_string()))?;
        Ok(self.complete_entry(idx, messages, params))
    }

    pub fn complete_role(&self, role: GatewayRole, messages: &[Message]) -> CandidateResponse {
        self.complete_entry(self.role_index(role), messages, None)
    }

    pub fn role_endpoint_id(&self, role: GatewayRole) -> &str {
        &self.entries[self.role_index(role)].endpoint.id
    }

    /// Prompts every pool member, preserving pool order. Per-endpoint
    /// failures come back as error candidates rather than aborting the batch.
    pub fn generate_candidates(&self, messages: &[Message]) -> Vec<CandidateResponse> {
        exec::map_batch(self.pool.clone(), |idx| {
            self.complete_entry(idx, messages, None)
        })
    }
}

/// A fully offline pool: three stub response generators plus a stub
/// auxiliary endpoint covering the classifier, query generator, query
/// filter, and judge roles. Deterministic end to end, so it backs CI runs,
/// benchmarks, and demo pipelines without any live endpoint.
///
/// `score_weights` shapes the judge's base-score distribution, e.g.
/// `&[(5, 6), (4, 3), (3, 1)]`.
pub fn offline_pool_config(score_weights: &[(u8, u32)]) -> PoolConfig {
    let classifier_choices = vec![
        r#"{"intent":"code_generation","difficulty":"elementary","reference_regions":["general_knowledge"]}"#.to_string(),
        r#"{"intent":"code_repair","difficulty":"advanced","reference_regions":["question","error_messages"]}"#.to_string(),
        r#"{"intent":"code_explanation","difficulty":"intermediate","reference_regions":["selected_code"]}"#.to_string(),
        r#"{"intent":"comment_generation","difficulty":"elementary","reference_regions":["selected_code"]}"#.to_string(),
        r#"{"intent":"general_qa","difficulty":"expert","reference_regions":["general_knowledge"]}"#.to_string(),
        r#"{"intent":"code_editing","difficulty":"advanced","reference_regions":["context","selected_code"]}"#.to_string(),
    ];
    let weights: BTreeMap<String, u32> = score_weights
        .iter()
        .map(|(score, weight)| (score.to_string(), *weight))
        .collect();
    let aux = StubSpec {
        rules: vec![
            StubRule {
                system_contains: Some("label developer chat interactions".into()),
                last_user_contains: None,
                reply: StubReply::HashPick {
                    choices: classifier_choices,
                },
            },
            StubRule {
                system_contains: Some("realistic developer question".into()),
                last_user_contains: None,
                reply: StubReply::Templated {
                    text: "How does the highlighted section handle case {hash8}?".into(),
                },
            },
            StubRule {
                system_contains: Some("review one generated developer question".into()),
                last_user_contains: None,
                reply: StubReply::Fixed {
                    text: r#"{"pass": true, "rationale": "clear and answerable"}"#.into(),
                    truncated: false,
                },
            },
            StubRule {
                system_contains: Some("grade one assistant answer".into()),
                last_user_contains: None,
                reply: StubReply::Scored { weights },
            },
            StubRule {
                system_contains: Some("rank several candidate answers".into()),
                last_user_contains: None,
                reply: StubReply::HashPick {
                    choices: vec![
                        "Both are strong; the first is tighter.\nBest: 1".into(),
                        "The second covers the edge case.\nBest: 2".into(),
                    ],
                },
            },
        ],
        default: StubReply::EchoLastUser,
    };
    let generator = |tag: &str| {
        StubSpec {
        rules: vec![],
        default: StubReply::Templated {
            text: format!(
                "```\nresult = resolve_{{hash8}}_{tag}()\n```\nThis change resolves the request in place and returns the computed result."
            ),
        },
    }
    };
    PoolConfig {
        endpoints: vec![
            EndpointConfig {
                endpoint: ModelEndpoint {
                    id: "gen-a".into(),
                    base_url: None,
                    model: "stub".into(),
                    auth_env: None,
                    params: SamplingParams::default(),
                },
                stub: Some(generator("a")),
            },
            EndpointConfig {
                endpoint: ModelEndpoint {
                    id: "gen-b".into(),
                    base_url: None,
                    model: "stub".into(),
                    auth_env: None,
                    params: SamplingParams::default(),
                },
                stub: Some(generator("b")),
            },
            EndpointConfig {
                endpoint: ModelEndpoint {
                    id: "gen-c".into(),
                    base_url: None,
                    model: "stub".into(),
                    auth_env: None,
                    params: SamplingParams::default(),
                },
                stub: Some(generator("c")),
            },
            EndpointConfig {
                endpoint: ModelEndpoint {
                    id: "aux".into(),
                    base_url: None,
                    model: "stub".into(),
                    auth_env: None,
                    params: SamplingParams::default(),
                },
                stub: Some(aux),
            },
        ],
        pool: Some(vec!["gen-a".into(), "gen-b".into(), "gen-c".into()]),
        roles: RoleBindings {
            responder: Some("gen-a".into()),
            classifier: Some("aux".into()),
            query_generator: Some("aux".into()),
            query_filter: Some("aux".into()),
            judge: Some("aux".into()),
        },
        timeout_secs: 5,
        backoff_ms: 1,
    }
}

/// Convenience constructor for a single all-stub pool used across tests.
pub fn stub_pool_config(stubs: Vec<(&str, StubSpec)>) -> PoolConfig {
    PoolConfig {
        endpoints: stubs
            .into_iter()
            .map(|(id, spec)| EndpointConfig {
                endpoint: ModelEndpoint {
                    id: id.to_string(),
                    base_url: None,
                    model: "stub".into(),
                    auth_env: None,
                    params: SamplingParams::default(),
                },
                stub: Some(spec),
            })
            .collect(),
        pool: None,
        roles: RoleBindings::default(),
        timeout_secs: 5,
        backoff_ms: 1,
    }
}

//! Provider-agnostic multimodal inference.
//!
//! Methods talk to models only through [`LlmGateway::complete`], which
//! resolves the provider adapter, formats images, retries transient
//! failures, accounts tokens and appends one record per call to a
//! [`CallLog`].

mod calllog;
pub mod mock;
pub mod openai;

use std::collections::HashMap;
use std::io::Cursor;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use calllog::{CallLog, CallRecord};
pub use mock::MockProvider;
pub use openai::OpenAiCompatible;

/// Longest image side sent to a provider; larger images are downscaled.
pub const MAX_IMAGE_SIDE: u32 = 2048;
/// Default number of in-flight requests per provider.
pub const DEFAULT_PROVIDER_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Part {
    Text { text: String },
    Image {
        #[serde(with = "b64")]
        data: Vec<u8>,
        media_type: String,
    },
}

mod b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

impl Part {
    pub fn text(s: impl Into<String>) -> Self {
        Part::Text { text: s.into() }
    }

    pub fn png(data: Vec<u8>) -> Self {
        Part::Image {
            data,
            media_type: "image/png".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl ChatMessage {
    pub fn user(parts: Vec<Part>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            parts: vec![Part::text(text)],
        }
    }

    /// Concatenated text parts.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text { text } => Some(text.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub provider: String,
    pub model_id: String,
    /// Overrides the adapter's default base URL.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

fn default_max_output_tokens() -> u32 {
    4096
}

impl ModelSpec {
    pub fn new(provider: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            model_id: model_id.into(),
            endpoint: None,
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
        }
    }

    /// Parse `provider:model_id`. The model id may itself contain colons.
    pub fn parse(s: &str) -> Result<Self, LlmError> {
        match s.split_once(':') {
            Some((p, m)) if !p.is_empty() && !m.is_empty() => Ok(Self::new(p, m)),
            _ => Err(LlmError::InvalidRequest(format!(
                "model must look like provider:model_id, got {s:?}"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_id.is_empty() {
            return Err(LlmError::InvalidRequest("empty model_id".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.provider, self.model_id)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_text_tokens: u64,
    pub prompt_image_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn new(text: u64, image: u64, completion: u64) -> Self {
        Self {
            prompt_text_tokens: text,
            prompt_image_tokens: image,
            completion_tokens: completion,
        }
    }

    pub fn total(&self) -> u64 {
        self.prompt_text_tokens + self.prompt_image_tokens + self.completion_tokens
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, o: TokenUsage) -> TokenUsage {
        TokenUsage::new(
            self.prompt_text_tokens + o.prompt_text_tokens,
            self.prompt_image_tokens + o.prompt_image_tokens,
            self.completion_tokens + o.completion_tokens,
        )
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, o: TokenUsage) {
        *self = *self + o;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: f64,
    pub provider_request_id: Option<String>,
    /// Image tokens were estimated rather than reported by the provider.
    pub usage_estimated: bool,
    pub attempts: u32,
}

/// Token counts as a provider reports them. Any field may be missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportedUsage {
    /// Prompt tokens including images, when only a total is known.
    pub prompt_total: Option<u64>,
    pub prompt_text: Option<u64>,
    pub prompt_image: Option<u64>,
    pub completion: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub usage: ReportedUsage,
    pub request_id: Option<String>,
}

/// What an adapter sees for one attempt.
#[derive(Debug, Clone)]
pub struct ProviderRequest<'a> {
    pub model: &'a ModelSpec,
    pub messages: &'a [ChatMessage],
    pub api_key: Option<String>,
    pub base_url: Option<String>,
}

/// Classified adapter failure; the gateway decides what is retried.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderFailure {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited: {message}")]
    RateLimited {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider error {status}: {message}")]
    Provider { status: u16, message: String },
}

impl ProviderFailure {
    fn retryable(&self) -> bool {
        matches!(self, ProviderFailure::RateLimited { .. } | ProviderFailure::Transport(_))
    }

    fn code(&self) -> &'static str {
        match self {
            ProviderFailure::Auth(_) => "AuthError",
            ProviderFailure::RateLimited { .. } => "RateLimited",
            ProviderFailure::Transport(_) => "TransportError",
            ProviderFailure::Provider { .. } => "ProviderError",
        }
    }
}

#[async_trait]
pub trait ProviderAdapter: Send + Sync {
    /// Adapters that talk to hosted APIs need a key; local mocks do not.
    fn requires_api_key(&self) -> bool {
        true
    }

    /// Estimate prompt tokens for an image of the given size when the
    /// provider does not report them.
    fn estimate_image_tokens(&self, width: u32, height: u32) -> u64 {
        tile_image_tokens(width, height)
    }

    async fn send(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure>;
}

/// `85 + 170 · tiles`, with the image covered by 512×512 tiles.
pub fn tile_image_tokens(width: u32, height: u32) -> u64 {
    let tiles = u64::from(width.div_ceil(512)) * u64::from(height.div_ceil(512));
    85 + 170 * tiles
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("missing or rejected API key for provider {provider}: {message}")]
    AuthError { provider: String, message: String },
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("transport error: {0}")]
    TransportError(String),
    #[error("provider error {status}: {message}")]
    ProviderError { status: u16, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("provider {0:?} is not registered")]
    ProviderNotFound(String),
    #[error("provider {0:?} is already registered")]
    DuplicateProvider(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::AuthError { .. } => "AuthError",
            LlmError::RateLimited(_) => "RateLimited",
            LlmError::TransportError(_) => "TransportError",
            LlmError::ProviderError { .. } => "ProviderError",
            LlmError::RetriesExhausted { .. } => "RetriesExhausted",
            LlmError::ProviderNotFound(_) => "ProviderNotFound",
            LlmError::DuplicateProvider(_) => "DuplicateProvider",
            LlmError::InvalidRequest(_) => "InvalidRequest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub initial_delay_ms: u64,
    pub factor: f64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_delay_ms: 2000,
            factor: 2.0,
            max_delay_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let ms = self.initial_delay_ms as f64 * self.factor.max(1.0).powi(retry as i32);
        Duration::from_millis(ms.min(self.max_delay_ms as f64) as u64)
    }
}

/// Per-call bookkeeping passed to [`LlmGateway::complete`].
#[derive(Clone, Copy)]
pub struct CallOptions<'a> {
    pub policy: &'a RetryPolicy,
    pub log: &'a CallLog,
    /// Free-form label recorded with the call, e.g. `direct` or `region:2`.
    pub stage: &'a str,
}

pub struct LlmGateway {
    providers: RwLock<HashMap<String, Arc<dyn ProviderAdapter>>>,
    limits: RwLock<HashMap<String, Arc<Semaphore>>>,
    default_cap: usize,
    env: HashMap<String, String>,
}

impl Default for LlmGateway {
    fn default() -> Self {
        Self::empty()
    }
}

impl LlmGateway {
    pub fn empty() -> Self {
        Self {
            providers: RwLock::new(HashMap::new()),
            limits: RwLock::new(HashMap::new()),
            default_cap: DEFAULT_PROVIDER_CONCURRENCY,
            env: HashMap::new(),
        }
    }

    /// Gateway with the shipped adapters: `openai` (any OpenAI-compatible
    /// endpoint) and the deterministic `mock`.
    pub fn with_default_providers() -> Self {
        let gw = Self::empty();
        gw.register_provider("openai", Arc::new(OpenAiCompatible::default()))
            .expect("fresh registry");
        gw.register_provider("mock", Arc::new(MockProvider::default()))
            .expect("fresh registry");
        gw
    }

    /// Provide an environment value that takes precedence over the process
    /// environment (keys and base URLs).
    pub fn with_env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.insert(key.into(), value.into());
        self
    }

    pub fn register_provider(
        &self,
        name: &str,
        adapter: Arc<dyn ProviderAdapter>,
    ) -> Result<(), LlmError> {
        let mut providers = self.providers.write().unwrap();
        if providers.contains_key(name) {
            return Err(LlmError::DuplicateProvider(name.to_string()));
        }
        providers.insert(name.to_string(), adapter);
        Ok(())
    }

    pub fn has_provider(&self, name: &str) -> bool {
        self.providers.read().unwrap().contains_key(name)
    }

    pub fn set_concurrency_cap(&self, provider: &str, cap: usize) {
        self.limits
            .write()
            .unwrap()
            .insert(provider.to_string(), Arc::new(Semaphore::new(cap.max(1))));
    }

    fn limiter(&self, provider: &str) -> Arc<Semaphore> {
        if let Some(s) = self.limits.read().unwrap().get(provider) {
            return s.clone();
        }
        self.limits
            .write()
            .unwrap()
            .entry(provider.to_string())
            .or_insert_with(|| Arc::new(Semaphore::new(self.default_cap)))
            .clone()
    }

    fn adapter(&self, provider: &str) -> Result<Arc<dyn ProviderAdapter>, LlmError> {
        self.providers
            .read()
            .unwrap()
            .get(provider)
            .cloned()
            .ok_or_else(|| LlmError::ProviderNotFound(provider.to_string()))
    }

    fn env_var(&self, key: &str) -> Option<String> {
        self.env
            .get(key)
            .cloned()
            .or_else(|| std::env::var(key).ok())
            .filter(|v| !v.is_empty())
    }

    /// Environment variable stem for a provider: `UIBENCH_<PROVIDER>_`.
    pub fn env_prefix(provider: &str) -> String {
        let stem: String = provider
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' })
            .collect();
        format!("UIBENCH_{stem}_")
    }

    /// Send one completion request. Exactly one record is appended to
    /// `opts.log`, whatever the outcome.
    pub async fn complete(
        &self,
        model: &ModelSpec,
        messages: &[ChatMessage],
        opts: CallOptions<'_>,
    ) -> Result<CompletionResult, LlmError> {
        let started = Instant::now();
        let mut record = CallRecord::new(model, opts.stage);
        let result = self.complete_inner(model, messages, opts.policy, &mut record).await;
        record.latency_ms = started.elapsed().as_secs_f64() * 1000.0;
        match &result {
            Ok(r) => {
                record.status = "ok".into();
                record.usage = r.usage;
                record.estimated = r.usage_estimated;
            }
            Err(e) => {
                record.status = e.code().into();
                record.error = Some(e.to_string());
            }
        }
        opts.log.append(record).map_err(|e| LlmError::InvalidRequest(format!("call log: {e}")))?;
        result.map(|mut r| {
            r.latency_ms = started.elapsed().as_secs_f64() * 1000.0;
            r
        })
    }

    async fn complete_inner(
        &self,
        model: &ModelSpec,
        messages: &[ChatMessage],
        policy: &RetryPolicy,
        record: &mut CallRecord,
    ) -> Result<CompletionResult, LlmError> {
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if messages.iter().any(|m| m.parts.is_empty()) {
            return Err(LlmError::InvalidRequest("message without parts".into()));
        }
        model.validate()?;
        let adapter = self.adapter(&model.provider)?;

        let prefix = Self::env_prefix(&model.provider);
        let api_key = self.env_var(&format!("{prefix}API_KEY"));
        if adapter.requires_api_key() && api_key.is_none() {
            return Err(LlmError::AuthError {
                provider: model.provider.clone(),
                message: format!("set {prefix}API_KEY"),
            });
        }
        let base_url = model
            .endpoint
            .clone()
            .or_else(|| self.env_var(&format!("{prefix}BASE_URL")));

        let (messages, image_dims, downscaled) = prepare_images(messages)?;
        record.downscaled_images = downscaled;

        let request = ProviderRequest {
            model,
            messages: &messages,
            api_key,
            base_url,
        };

        let limiter = self.limiter(&model.provider);
        let max_attempts = policy.max_attempts.max(1);
        let mut attempt = 0u32;
        let mut prev_delay = Duration::ZERO;
        loop {
            attempt += 1;
            record.attempt = attempt;
            let outcome = {
                let _permit = limiter.acquire().await.expect("semaphore never closed");
                adapter.send(&request).await
            };
            match outcome {
                Ok(reply) => {
                    let (usage, estimated) = resolve_usage(&reply.usage, &image_dims, adapter.as_ref());
                    return Ok(CompletionResult {
                        text: reply.text,
                        usage,
                        latency_ms: 0.0,
                        provider_request_id: reply.request_id,
                        usage_estimated: estimated,
                        attempts: attempt,
                    });
                }
                Err(failure) if failure.retryable() && attempt < max_attempts => {
                    let mut delay = policy.delay(attempt - 1).max(prev_delay);
                    if let ProviderFailure::RateLimited {
                        retry_after: Some(ra),
                        ..
                    } = &failure
                    {
                        delay = delay.max((*ra).min(Duration::from_millis(policy.max_delay_ms)));
                    }
                    tracing::debug!(code = failure.code(), attempt, ?delay, "retrying provider call");
                    record.delays_ms.push(delay.as_millis() as u64);
                    prev_delay = delay;
                    tokio::time::sleep(delay).await;
                }
                Err(failure) if failure.retryable() => {
                    return Err(LlmError::RetriesExhausted {
                        attempts: attempt,
                        last: failure.to_string(),
                    });
                }
                Err(ProviderFailure::Auth(message)) => {
                    return Err(LlmError::AuthError {
                        provider: model.provider.clone(),
                        message,
                    })
                }
                Err(ProviderFailure::Provider { status, message }) => {
                    return Err(LlmError::ProviderError { status, message })
                }
                Err(other) => return Err(LlmError::TransportError(other.to_string())),
            }
        }
    }
}

/// Decode every image part, downscale oversized ones and collect their
/// final dimensions for token estimation.
fn prepare_images(
    messages: &[ChatMessage],
) -> Result<(Vec<ChatMessage>, Vec<(u32, u32)>, u32), LlmError> {
    let mut dims = Vec::new();
    let mut downscaled = 0;
    let mut out = Vec::with_capacity(messages.len());
    for m in messages {
        let mut parts = Vec::with_capacity(m.parts.len());
        for p in &m.parts {
            match p {
                Part::Text { .. } => parts.push(p.clone()),
                Part::Image { data, media_type } => {
                    let img = image::load_from_memory(data).map_err(|e| {
                        LlmError::InvalidRequest(format!("image part does not decode: {e}"))
                    })?;
                    let (w, h) = (img.width(), img.height());
                    if w.max(h) > MAX_IMAGE_SIDE {
                        let small = img.resize(
                            MAX_IMAGE_SIDE,
                            MAX_IMAGE_SIDE,
                            image::imageops::FilterType::Triangle,
                        );
                        let mut buf = Vec::new();
                        small
                            .write_to(&mut Cursor::new(&mut buf), image::ImageFormat::Png)
                            .map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
                        dims.push((small.width(), small.height()));
                        downscaled += 1;
                        parts.push(Part::png(buf));
                    } else {
                        dims.push((w, h));
                        parts.push(Part::Image {
                            data: data.clone(),
                            media_type: media_type.clone(),
                        });
                    }
                }
            }
        }
        out.push(ChatMessage {
            role: m.role,
            parts,
        });
    }
    Ok((out, dims, downscaled))
}

fn resolve_usage(
    reported: &ReportedUsage,
    image_dims: &[(u32, u32)],
    adapter: &dyn ProviderAdapter,
) -> (TokenUsage, bool) {
    let (image, estimated) = match reported.prompt_image {
        Some(n) => (n, false),
        None if image_dims.is_empty() => (0, false),
        None => (
            image_dims
                .iter()
                .map(|&(w, h)| adapter.estimate_image_tokens(w, h))
                .sum(),
            true,
        ),
    };
    let text = match (reported.prompt_text, reported.prompt_total) {
        (Some(t), _) => t,
        (None, Some(total)) => total.saturating_sub(image),
        (None, None) => 0,
    };
    (TokenUsage::new(text, image, reported.completion), estimated)
}

//! Adapter for OpenAI-compatible `chat/completions` endpoints, which covers
//! most hosted and self-served multimodal models.

use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};

use super::{Part, ProviderAdapter, ProviderFailure, ProviderReply, ProviderRequest, ReportedUsage, Role};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    default_base_url: String,
    client: reqwest::Client,
}

impl Default for OpenAiCompatible {
    fn default() -> Self {
        Self::new(DEFAULT_BASE_URL)
    }
}

impl OpenAiCompatible {
    pub fn new(default_base_url: &str) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .expect("reqwest client");
        Self {
            default_base_url: default_base_url.trim_end_matches('/').to_string(),
            client,
        }
    }

    pub fn request_body(request: &ProviderRequest<'_>) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text { text } => json!({"type": "text", "text": text}),
                        Part::Image { data, media_type } => {
                            let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                            json!({
                                "type": "image_url",
                                "image_url": {"url": format!("data:{media_type};base64,{b64}")}
                            })
                        }
                    })
                    .collect();
                json!({"role": role, "content": content})
            })
            .collect();
        json!({
            "model": request.model.model_id,
            "messages": messages,
            "max_tokens": request.model.max_output_tokens,
            "temperature": request.model.temperature,
        })
    }

    pub fn parse_reply(body: &Value) -> Result<ProviderReply, ProviderFailure> {
        let choice = body
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| ProviderFailure::Provider {
                status: 200,
                message: "response has no choices".into(),
            })?;
        let content = &choice["message"]["content"];
        let text = match content {
            Value::String(s) => s.clone(),
            Value::Array(parts) => parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
            _ => String::new(),
        };
        let usage = &body["usage"];
        let details = &usage["prompt_tokens_details"];
        Ok(ProviderReply {
            text,
            usage: ReportedUsage {
                prompt_total: usage.get("prompt_tokens").and_then(Value::as_u64),
                prompt_text: details.get("text_tokens").and_then(Value::as_u64),
                prompt_image: details.get("image_tokens").and_then(Value::as_u64),
                completion: usage
                    .get("completion_tokens")
                    .and_then(Value::as_u64)
                    .unwrap_or(0),
            },
            request_id: body.get("id").and_then(Value::as_str).map(str::to_string),
        })
    }
}

#[async_trait]
impl ProviderAdapter for OpenAiCompatible {
    async fn send(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        let base = request
            .base_url
            .as_deref()
            .unwrap_or(&self.default_base_url)
            .trim_end_matches('/');
        let mut req = self
            .client
            .post(format!("{base}/chat/completions"))
            .json(&Self::request_body(request));
        if let Some(key) = &request.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| ProviderFailure::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .text()
            .await
            .map_err(|e| ProviderFailure::Transport(e.to_string()))?;
        match status {
            200..=299 => {
                let body: Value = serde_json::from_str(&text).map_err(|e| {
                    ProviderFailure::Provider {
                        status,
                        message: format!("malformed JSON: {e}"),
                    }
                })?;
                Self::parse_reply(&body)
            }
            401 | 403 => Err(ProviderFailure::Auth(text)),
            429 => Err(ProviderFailure::RateLimited {
                message: text,
                retry_after,
            }),
            500..=599 => Err(ProviderFailure::Transport(format!("status {status}: {text}"))),
            _ => Err(ProviderFailure::Provider { status, message: text }),
        }
    }
}

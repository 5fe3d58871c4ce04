//! Deterministic in-process provider for tests and offline runs.
//!
//! Model ids understood by the default responder:
//!
//! * `echo` answers every request with a fenced HTML document derived only
//!   from the request itself (image size and mean color, prompt text, and any
//!   fenced HTML fragments in the prompt). Requests that mention a
//!   "fragment" get a bare fragment instead of a whole document.
//! * `fail` always returns a non-retryable provider error.
//! * `empty` returns an empty completion.

use std::fmt::Write as _;
use std::sync::Arc;

use async_trait::async_trait;
use image::GenericImageView;

use super::{
    tile_image_tokens, Part, ProviderAdapter, ProviderFailure, ProviderReply, ProviderRequest,
    ReportedUsage, TokenUsage,
};

type Responder =
    dyn Fn(&ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> + Send + Sync;

#[derive(Clone)]
pub struct MockProvider {
    responder: Arc<Responder>,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::from_fn(default_responder)
    }
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MockProvider")
    }
}

impl MockProvider {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> + Send + Sync + 'static,
    {
        Self {
            responder: Arc::new(f),
        }
    }

    /// Always answer with `text` and exactly the given usage.
    pub fn fixed(text: impl Into<String>, usage: TokenUsage) -> Self {
        let text = text.into();
        Self::from_fn(move |_| {
            Ok(ProviderReply {
                text: text.clone(),
                usage: ReportedUsage {
                    prompt_total: None,
                    prompt_text: Some(usage.prompt_text_tokens),
                    prompt_image: Some(usage.prompt_image_tokens),
                    completion: usage.completion_tokens,
                },
                request_id: None,
            })
        })
    }
}

#[async_trait]
impl ProviderAdapter for MockProvider {
    fn requires_api_key(&self) -> bool {
        false
    }

    async fn send(&self, request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
        (self.responder)(request)
    }
}

fn approx_tokens(s: &str) -> u64 {
    (s.chars().count() as u64).div_ceil(4)
}

fn default_responder(request: &ProviderRequest<'_>) -> Result<ProviderReply, ProviderFailure> {
    match request.model.model_id.as_str() {
        "fail" => Err(ProviderFailure::Provider {
            status: 400,
            message: "mock failure".into(),
        }),
        "empty" => Ok(reply(request, String::new())),
        _ => Ok(reply(request, echo_html(request))),
    }
}

fn reply(request: &ProviderRequest<'_>, text: String) -> ProviderReply {
    let mut prompt_text = 0;
    let mut prompt_image = 0;
    for m in request.messages {
        for p in &m.parts {
            match p {
                Part::Text { text } => prompt_text += approx_tokens(text),
                Part::Image { data, .. } => {
                    if let Ok(img) = image::load_from_memory(data) {
                        prompt_image += tile_image_tokens(img.width(), img.height());
                    }
                }
            }
        }
    }
    ProviderReply {
        usage: ReportedUsage {
            prompt_total: None,
            prompt_text: Some(prompt_text),
            prompt_image: Some(prompt_image),
            completion: approx_tokens(&text),
        },
        text,
        request_id: Some("mock".into()),
    }
}

fn fenced_html_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("```html") {
        let body = &rest[start + 7..];
        match body.find("```") {
            Some(end) => {
                out.push(body[..end].trim());
                rest = &body[end + 3..];
            }
            None => break,
        }
    }
    out
}

fn echo_html(request: &ProviderRequest<'_>) -> String {
    let mut text = String::new();
    let mut image = None;
    for m in request.messages {
        for p in &m.parts {
            match p {
                Part::Text { text: t } => text.push_str(t),
                Part::Image { data, .. } => {
                    if image.is_none() {
                        image = image::load_from_memory(data).ok();
                    }
                }
            }
        }
    }

    let fragments = fenced_html_blocks(&text);
    let mut body = String::new();
    match &image {
        Some(img) => {
            let (w, h) = img.dimensions();
            let rgb = img.to_rgb8();
            let n = u64::from(w) * u64::from(h);
            let mut sum = [0u64; 3];
            for px in rgb.pixels() {
                for c in 0..3 {
                    sum[c] += u64::from(px[c]);
                }
            }
            let mean = sum.map(|s| s / n.max(1));
            let _ = write!(
                body,
                "<section style=\"background:rgb({},{},{});min-height:{}px\" class=\"p-4\">\
                 <h1 class=\"text-2xl font-bold\">Mock page</h1>\
                 <p>Screenshot {}x{}</p></section>",
                mean[0], mean[1], mean[2], h.min(2000), w, h
            );
        }
        None if !fragments.is_empty() => {
            for f in &fragments {
                body.push_str(f);
                body.push('\n');
            }
        }
        None => {
            let words: Vec<&str> = text.split_whitespace().take(8).collect();
            let _ = write!(body, "<p>{}</p>", words.join(" "));
        }
    }
    if image.is_some() && text.contains("fragment") {
        return format!("```html\n{body}\n```\n");
    }
    format!(
        "Here is the page.\n```html\n<!DOCTYPE html>\n<html>\n<head><title>mock</title></head>\n<body>\n{body}\n</body>\n</html>\n```\n"
    )
}

//! Deterministic HTML rendering and visual block extraction.
//!
//! [`ChromeRenderer`] drives a headless Chromium over the DevTools protocol.
//! Every request the page makes is intercepted: the document and the bundled
//! utility-CSS runtime are served locally, every image resolves to the
//! bundled placeholder, and anything else is refused, so rendering never
//! touches the network.

mod blocks;
mod cdp;
mod chrome;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chrome::{find_chrome, ChromeOptions, ChromeRenderer};

use crate::metrics::PageDims;

/// Solid 200×150 gray PNG substituted for every image.
pub const PLACEHOLDER_PNG: &[u8] = include_bytes!("../../assets/placeholder.png");
/// Vendored Tailwind-compatible browser runtime (MIT, see assets/).
pub const UTILITY_CSS_RUNTIME: &str = include_str!("../../assets/tailwind-browser.js");

/// Maximum time a page load may take.
pub const LOAD_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub viewport_width: u32,
    pub viewport_height: u32,
    pub device_scale: f64,
    pub settle_ms: u64,
    pub full_page: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            viewport_width: 1280,
            viewport_height: 800,
            device_scale: 1.0,
            settle_ms: 500,
            full_page: true,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.viewport_width < 64 || self.viewport_height < 64 {
            return Err("viewport must be at least 64×64".into());
        }
        if self.settle_ms > 30_000 {
            return Err("settle_ms must not exceed 30000".into());
        }
        if !(self.device_scale > 0.0 && self.device_scale <= 4.0) {
            return Err("device_scale must be in (0, 4]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// A visible run of text with its border box and computed text color.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub text: String,
    pub bbox: BBox,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestAction {
    /// Served from memory (the document or the CSS runtime).
    ServedLocal,
    /// Answered with the placeholder image.
    Placeholder,
    /// Local path we do not have; answered 404.
    NotFound,
    /// Refused without touching the network.
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub url: String,
    pub resource_type: String,
    pub action: RequestAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderResult {
    /// PNG bytes.
    #[serde(skip)]
    pub screenshot: Vec<u8>,
    /// CSS pixels.
    pub page_width: u32,
    pub page_height: u32,
    pub console_errors: Vec<String>,
    pub blocks: Vec<Block>,
    pub requests: Vec<RequestRecord>,
}

impl RenderResult {
    pub fn dims(&self) -> PageDims {
        PageDims {
            width: f64::from(self.page_width),
            height: f64::from(self.page_height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("page load exceeded {0} ms")]
    RenderTimeout(u64),
    #[error("browser crashed: {0}")]
    BrowserCrash(String),
    #[error("browser unavailable: {0}")]
    BrowserUnavailable(String),
    #[error("invalid render request: {0}")]
    Invalid(String),
    #[error("devtools protocol error: {0}")]
    Protocol(String),
}

impl RenderError {
    pub fn code(&self) -> &'static str {
        match self {
            RenderError::RenderTimeout(_) => "RenderTimeout",
            RenderError::BrowserCrash(_) => "BrowserCrash",
            RenderError::BrowserUnavailable(_) => "BrowserUnavailable",
            RenderError::Invalid(_) => "InvalidRender",
            RenderError::Protocol(_) => "ProtocolError",
        }
    }
}

#[async_trait]
pub trait Renderer: Send + Sync {
    async fn render(&self, html: &str, cfg: &RenderConfig) -> Result<RenderResult, RenderError>;
}

/// Stand-in used when no browser can be found: every render fails with
/// `BrowserUnavailable`, so read-only operations keep working.
#[derive(Debug, Clone)]
pub struct UnavailableRenderer(pub String);

#[async_trait]
impl Renderer for UnavailableRenderer {
    async fn render(&self, _: &str, _: &RenderConfig) -> Result<RenderResult, RenderError> {
        Err(RenderError::BrowserUnavailable(self.0.clone()))
    }
}

/// Normalize whitespace the same way the in-page extractor does.
pub fn normalize_block_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

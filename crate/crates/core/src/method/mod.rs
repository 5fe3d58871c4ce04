//! Generation methods behind one interface.
//!
//! A method turns an input screenshot into HTML, doing all model traffic
//! through the [`LlmGateway`] so every call lands in the instance call log.
//! Two methods ship: [`DirectPrompt`] (`direct`) and
//! [`DecomposeMethod`] (`decompose`). Others plug in through
//! [`MethodRegistry::register`].

mod decompose;
mod direct;
mod extract;
pub mod segment;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use decompose::{
    select_candidate, DecomposeMethod, ASSEMBLY_PROMPT, DECOMPOSE_PROMPT_VERSION, REGION_PROMPT,
};
pub use direct::{DirectPrompt, DIRECT_PROMPT};
pub use extract::extract_html;
pub use segment::{segment, Rect, Region, SegmentParams, Segmentation};

use crate::dataset::InputInstance;
use crate::llm::{CallLog, LlmError, LlmGateway, ModelSpec, RetryPolicy, TokenUsage};
use crate::metrics::EmbeddingBackend;
use crate::render::{RenderConfig, RenderError, Renderer};

/// Method parameters: string keys to JSON strings or numbers.
pub type ParamMap = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default)]
    pub description: String,
}

impl MethodSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: ParamMap::new(),
            description: String::new(),
        }
    }
}

/// HTML produced for one leaf region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub region: usize,
    pub bbox: Rect,
    pub html: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationArtifact {
    pub generated_code: String,
    pub region_tree: Option<Region>,
    #[serde(default)]
    pub regions_capped: bool,
    pub call_log_ref: Option<PathBuf>,
    pub usage_total: TokenUsage,
    pub candidates_considered: u32,
    /// Visual score per candidate when several were compared; `None` for a
    /// candidate whose render failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_scores: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_candidate: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fragments: Vec<Fragment>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MethodError {
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error("method {0:?} is already registered")]
    DuplicateMethod(String),
    #[error("invalid method parameters: {0}")]
    InvalidParams(String),
    #[error("stage {stage}: model returned no HTML")]
    EmptyGeneration { stage: String },
    #[error("stage {stage}{}: {source}", region.as_ref().map(|r| format!(" (region {r})")).unwrap_or_default())]
    Llm {
        stage: String,
        region: Option<String>,
        source: LlmError,
    },
    #[error("stage {stage}: {source}")]
    Render { stage: String, source: RenderError },
    #[error("bad input: {0}")]
    Input(String),
}

impl MethodError {
    pub fn code(&self) -> &'static str {
        match self {
            MethodError::UnknownMethod(_) => "UnknownMethod",
            MethodError::DuplicateMethod(_) => "DuplicateMethod",
            MethodError::InvalidParams(_) => "InvalidParams",
            MethodError::EmptyGeneration { .. } => "EmptyGeneration",
            MethodError::Llm { source, .. } => source.code(),
            MethodError::Render { source, .. } => source.code(),
            MethodError::Input(_) => "InvalidInput",
        }
    }

    pub fn stage(&self) -> Option<&str> {
        match self {
            MethodError::EmptyGeneration { stage }
            | MethodError::Llm { stage, .. }
            | MethodError::Render { stage, .. } => Some(stage),
            _ => None,
        }
    }

    fn in_stage(self, stage: &str) -> Self {
        match self {
            MethodError::EmptyGeneration { .. } => MethodError::EmptyGeneration {
                stage: stage.to_string(),
            },
            other => other,
        }
    }
}

/// Everything a method may use while generating for one instance.
pub struct MethodContext<'a> {
    pub gateway: &'a LlmGateway,
    pub model: &'a ModelSpec,
    pub retry: &'a RetryPolicy,
    pub instance: &'a InputInstance,
    /// The input screenshot as PNG.
    pub screenshot: &'a [u8],
    pub call_log: &'a CallLog,
    pub renderer: &'a dyn Renderer,
    pub render_config: &'a RenderConfig,
    pub embedding: &'a dyn EmbeddingBackend,
}

#[async_trait]
pub trait GenerationMethod: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str;

    /// Fill in defaults and check `given`; the result is what gets recorded
    /// in the run configuration.
    fn resolve_params(&self, given: &ParamMap) -> Result<ParamMap, MethodError>;

    async fn generate(
        &self,
        ctx: &MethodContext<'_>,
        params: &ParamMap,
    ) -> Result<GenerationArtifact, MethodError>;
}

#[derive(Clone)]
pub struct MethodRegistry {
    methods: BTreeMap<String, Arc<dyn GenerationMethod>>,
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            methods: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(DirectPrompt)).expect("fresh registry");
        r.register(Arc::new(DecomposeMethod)).expect("fresh registry");
        r
    }

    pub fn register(&mut self, method: Arc<dyn GenerationMethod>) -> Result<(), MethodError> {
        let name = method.name().to_string();
        if self.methods.contains_key(&name) {
            return Err(MethodError::DuplicateMethod(name));
        }
        self.methods.insert(name, method);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn GenerationMethod>, MethodError> {
        self.methods
            .get(name)
            .cloned()
            .ok_or_else(|| MethodError::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.methods.keys().map(String::as_str).collect()
    }

    /// Resolve a spec into its fully-parameterized form.
    pub fn resolve(&self, spec: &MethodSpec) -> Result<MethodSpec, MethodError> {
        let method = self.get(&spec.name)?;
        Ok(MethodSpec {
            name: spec.name.clone(),
            params: method.resolve_params(&spec.params)?,
            description: method.description().to_string(),
        })
    }

    pub async fn run_method(
        &self,
        spec: &MethodSpec,
        ctx: &MethodContext<'_>,
    ) -> Result<GenerationArtifact, MethodError> {
        let method = self.get(&spec.name)?;
        let params = method.resolve_params(&spec.params)?;
        let mut artifact = method.generate(ctx, &params).await?;
        artifact.usage_total = ctx.call_log.usage_total();
        artifact.call_log_ref = ctx.call_log.path().map(PathBuf::from);
        Ok(artifact)
    }
}

/// Parse a `key=value` pair from the command line; numbers become JSON
/// numbers, anything else a string.
pub fn parse_param(kv: &str) -> Result<(String, Value), MethodError> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| MethodError::InvalidParams(format!("expected key=value, got {kv:?}")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(MethodError::InvalidParams(format!("empty key in {kv:?}")));
    }
    let v = v.trim();
    let value = if let Ok(i) = v.parse::<i64>() {
        Value::from(i)
    } else if let Some(f) = v.parse::<f64>().ok().filter(|f| f.is_finite()) {
        Value::from(f)
    } else {
        Value::from(v)
    };
    Ok((k.to_string(), value))
}

pub(crate) fn param_f64(params: &ParamMap, key: &str) -> Result<Option<f64>, MethodError> {
    match params.get(key) {
        None => Ok(None),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(Value::String(s)) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| MethodError::InvalidParams(format!("{key} must be a number, got {s:?}"))),
        Some(other) => Err(MethodError::InvalidParams(format!(
            "{key} must be a number, got {other}"
        ))),
    }
}

pub(crate) fn param_u64(params: &ParamMap, key: &str) -> Result<Option<u64>, MethodError> {
    match param_f64(params, key)? {
        None => Ok(None),
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64 => Ok(Some(f as u64)),
        Some(f) => Err(MethodError::InvalidParams(format!(
            "{key} must be a non-negative integer, got {f}"
        ))),
    }
}

pub(crate) fn reject_unknown(params: &ParamMap, known: &[&str]) -> Result<(), MethodError> {
    match params.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(MethodError::InvalidParams(format!(
            "unknown parameter {k:?} (known: {})",
            known.join(", ")
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_params() {
        assert_eq!(parse_param("k=2").unwrap(), ("k".into(), Value::from(2)));
        assert_eq!(parse_param("tol=4.5").unwrap(), ("tol".into(), Value::from(4.5)));
        assert_eq!(parse_param("v=abc").unwrap(), ("v".into(), Value::from("abc")));
        assert!(parse_param("novalue").is_err());
    }

    #[test]
    fn unknown_method() {
        let r = MethodRegistry::with_builtin();
        assert_eq!(
            r.resolve(&MethodSpec::named("latcoder-full")).unwrap_err(),
            MethodError::UnknownMethod("latcoder-full".into())
        );
        assert_eq!(r.names(), ["decompose", "direct"]);
    }
}

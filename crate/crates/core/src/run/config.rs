use std::path::PathBuf;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::{ModelSpec, RetryPolicy};
use crate::method::MethodSpec;
use crate::metrics::MetricConfig;
use crate::render::RenderConfig;

/// Immutable description of one run, written as `config.json` before any
/// instance executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub dataset_root: PathBuf,
    pub model: ModelSpec,
    /// Method with every parameter resolved, defaults included.
    pub method: MethodSpec,
    pub render_config: RenderConfig,
    pub metric_config: MetricConfig,
    pub retry_policy: RetryPolicy,
    pub concurrency: usize,
    pub created_at: DateTime<Utc>,
}

/// Either `"provider:model_id"` or a full model object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Label(String),
    Spec(ModelSpec),
}

/// Either a bare method name or a full method object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodRef {
    Name(String),
    Spec(MethodSpec),
}

/// What a caller submits: a [`RunConfig`] without the generated fields,
/// with every knob optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    pub dataset_root: PathBuf,
    pub model: ModelRef,
    pub method: MethodRef,
    #[serde(default)]
    pub render_config: Option<RenderConfig>,
    #[serde(default)]
    pub metric_config: Option<MetricConfig>,
    #[serde(default)]
    pub retry_policy: Option<RetryPolicy>,
    #[serde(default)]
    pub concurrency: Option<usize>,
}

impl RunRequest {
    pub fn new(dataset_root: impl Into<PathBuf>, model: &str, method: &str) -> Self {
        Self {
            dataset_root: dataset_root.into(),
            model: ModelRef::Label(model.to_string()),
            method: MethodRef::Name(method.to_string()),
            render_config: None,
            metric_config: None,
            retry_policy: None,
            concurrency: None,
        }
    }
}

pub const DEFAULT_RUN_CONCURRENCY: usize = 2;

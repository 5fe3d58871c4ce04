//! Run reports and leaderboards, computed purely from run artifacts.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::llm::{CallLog, TokenUsage};
use crate::method::ParamMap;
use crate::metrics::{MetricName, MetricReport, UnavailableMetric};
use crate::run::store::{artifact, read_json, REPORT_FILE};
use crate::run::{FailureInfo, InstanceStatus, RunError, RunStore};

pub const SCHEMA_VERSION: u32 = 1;

/// Mean, median and population standard deviation over the available
/// values; all `None` when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub stddev: Option<f64>,
    pub count_available: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: None,
                median: None,
                stddev: None,
                count_available: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean: Some(mean),
            median: Some(median),
            stddev: Some(var.sqrt()),
            count_available: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAggregates {
    /// Instances that reached `done`; the means are over these.
    pub instances_counted: usize,
    pub mean_prompt_text: Option<f64>,
    pub mean_prompt_image: Option<f64>,
    pub mean_completion: Option<f64>,
    pub mean_total: Option<f64>,
    /// Totals over every call of every instance, failed ones included.
    pub sum: TokenUsage,
    pub sum_total: u64,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub model: String,
    pub provider: String,
    pub model_id: String,
    pub method: String,
    pub params: ParamMap,
    pub dataset: String,
    pub instances: usize,
    pub concurrency: usize,
    pub match_threshold: f64,
    pub embedding: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub status: InstanceStatus,
    pub metrics: BTreeMap<MetricName, Option<f64>>,
    pub unavailable: Vec<UnavailableMetric>,
    pub tokens: TokenUsage,
    /// Artifact name to path relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub id: String,
    #[serde(flatten)]
    pub failure: FailureInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub config: ConfigSummary,
    pub total: usize,
    pub done: usize,
    pub failed: usize,
    pub metrics: BTreeMap<MetricName, Aggregate>,
    pub tokens: TokenAggregates,
    pub instances: Vec<InstanceRow>,
    pub failures: Vec<FailureRow>,
}

const LISTED_ARTIFACTS: [&str; 7] = [
    artifact::GENERATED_HTML,
    artifact::GENERATED_PNG,
    artifact::REFERENCE_PNG,
    artifact::BLOCKS_REF,
    artifact::BLOCKS_GEN,
    artifact::CALL_LOG,
    artifact::METRICS,
];

/// Build the report of a run whose instances are all terminal.
pub fn build_report(store: &RunStore, run_id: &str) -> Result<RunReport, RunError> {
    let config = store.read_config(run_id)?;
    let state = store.read_state(run_id)?;
    if !state.all_terminal() {
        return Err(RunError::RunNotTerminal(run_id.to_string()));
    }
    let manifest = store.read_manifest(run_id)?;
    let run_dir = store.run_dir(run_id);

    let mut values: BTreeMap<MetricName, Vec<f64>> = BTreeMap::new();
    let mut done_usage = Vec::new();
    let mut sum = TokenUsage::default();
    let mut calls = 0;
    let mut instances = Vec::new();
    let mut failures = Vec::new();

    for (id, st) in &state.instances {
        let rel = format!("instances/{id}");
        let dir = run_dir.join(&rel);
        let log_path = dir.join(artifact::CALL_LOG);
        let records = if log_path.is_file() {
            CallLog::read_jsonl(&log_path)?
        } else {
            Vec::new()
        };
        calls += records.len();
        let instance_usage: TokenUsage = records.iter().map(|r| r.usage).sum();
        sum += instance_usage;

        let mut row = InstanceRow {
            id: id.clone(),
            status: st.status,
            metrics: BTreeMap::new(),
            unavailable: Vec::new(),
            tokens: instance_usage,
            artifacts: LISTED_ARTIFACTS
                .iter()
                .filter(|a| dir.join(a).is_file())
                .map(|a| (a.to_string(), format!("{rel}/{a}")))
                .collect(),
            failure: st.failure.clone(),
        };
        match st.status {
            InstanceStatus::Done => {
                let m: MetricReport = read_json(&dir.join(artifact::METRICS))?;
                for name in MetricName::ALL {
                    let v = m.get(name);
                    if let Some(v) = v {
                        values.entry(name).or_default().push(v);
                    }
                    row.metrics.insert(name, v);
                }
                row.unavailable = m.unavailable.clone();
                row.tokens = m.token_usage;
                done_usage.push(m.token_usage);
            }
            _ => {
                if let Some(f) = &st.failure {
                    failures.push(FailureRow {
                        id: id.clone(),
                        failure: f.clone(),
                    });
                }
            }
        }
        instances.push(row);
    }

    let metrics = MetricName::ALL
        .into_iter()
        .map(|n| (n, Aggregate::of(values.get(&n).map_or(&[][..], Vec::as_slice))))
        .collect();
    let mean_of = |f: fn(&TokenUsage) -> u64| {
        (!done_usage.is_empty())
            .then(|| done_usage.iter().map(|u| f(u) as f64).sum::<f64>() / done_usage.len() as f64)
    };
    let tokens = TokenAggregates {
        instances_counted: done_usage.len(),
        mean_prompt_text: mean_of(|u| u.prompt_text_tokens),
        mean_prompt_image: mean_of(|u| u.prompt_image_tokens),
        mean_completion: mean_of(|u| u.completion_tokens),
        mean_total: mean_of(TokenUsage::total),
        sum_total: sum.total(),
        sum,
        calls,
    };

    Ok(RunReport {
        schema_version: SCHEMA_VERSION,
        run_id: run_id.to_string(),
        created_at: config.created_at,
        config: ConfigSummary {
            model: config.model.label(),
            provider: config.model.provider.clone(),
            model_id: config.model.model_id.clone(),
            method: config.method.name.clone(),
            params: config.method.params.clone(),
            dataset: manifest.name,
            instances: state.counters.total,
            concurrency: config.concurrency,
            match_threshold: config.metric_config.match_threshold,
            embedding: match &config.metric_config.embedding {
                crate::metrics::EmbeddingConfig::BuiltinHist => "builtin-hist".into(),
                crate::metrics::EmbeddingConfig::ClipService { url } => {
                    format!("clip-service ({url})")
                }
            },
        },
        total: state.counters.total,
        done: state.counters.done,
        failed: state.counters.failed,
        metrics,
        tokens,
        instances,
        failures,
    })
}

/// The stored `report.json` of a finished run.
pub fn load_report(store: &RunStore, run_id: &str) -> Result<RunReport, RunError> {
    let state = store.read_state(run_id)?;
    let path = store.run_dir(run_id).join(REPORT_FILE);
    if !state.all_terminal() || !path.is_file() {
        return Err(RunError::RunNotTerminal(run_id.to_string()));
    }
    Ok(read_json(&path)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

impl RunReport {
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Run {}\n", self.run_id);
        let _ = writeln!(
            s,
            "- model: `{}`\n- method: `{}`\n- dataset: `{}` ({} instances: {} done, {} failed)\n",
            self.config.model, self.config.method, self.config.dataset, self.total, self.done, self.failed
        );
        s.push_str("| metric | mean | median | stddev | n |\n|---|---|---|---|---|\n");
        for (name, a) in &self.metrics {
            let _ = writeln!(
                s,
                "| {name} | {} | {} | {} | {} |",
                fmt_opt(a.mean),
                fmt_opt(a.median),
                fmt_opt(a.stddev),
                a.count_available
            );
        }
        let t = &self.tokens;
        let _ = writeln!(
            s,
            "\n| tokens | text | image | completion | total |\n|---|---|---|---|---|\n| mean per instance | {} | {} | {} | {} |\n| sum ({} calls) | {} | {} | {} | {} |",
            fmt_opt(t.mean_prompt_text),
            fmt_opt(t.mean_prompt_image),
            fmt_opt(t.mean_completion),
            fmt_opt(t.mean_total),
            t.calls,
            t.sum.prompt_text_tokens,
            t.sum.prompt_image_tokens,
            t.sum.completion_tokens,
            t.sum_total
        );
        s.push_str("\n| instance | status |");
        for n in MetricName::ALL {
            let _ = write!(s, " {n} |");
        }
        s.push_str("\n|---|---|");
        s.push_str(&"---|".repeat(MetricName::ALL.len()));
        s.push('\n');
        for row in &self.instances {
            let status = serde_json::to_value(row.status).unwrap();
            let _ = write!(s, "| {} | {} |", row.id, status.as_str().unwrap_or(""));
            for n in MetricName::ALL {
                let _ = write!(s, " {} |", fmt_opt(row.metrics.get(&n).copied().flatten()));
            }
            s.push('\n');
        }
        if !self.failures.is_empty() {
            s.push_str("\n## Failures\n\n");
            for f in &self.failures {
                let _ = writeln!(s, "- `{}`: {} ({})", f.id, f.failure.code, f.failure.message);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub run_id: String,
    pub model: String,
    pub method: String,
    pub params: ParamMap,
    pub metrics: BTreeMap<MetricName, Option<f64>>,
    pub mean_total_tokens: Option<f64>,
    pub done: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub sort_by: MetricName,
    pub rows: Vec<LeaderboardRow>,
}

impl LeaderboardRow {
    pub fn from_report(r: &RunReport) -> Self {
        Self {
            run_id: r.run_id.clone(),
            model: r.config.model.clone(),
            method: r.config.method.clone(),
            params: r.config.params.clone(),
            metrics: r.metrics.iter().map(|(k, a)| (*k, a.mean)).collect(),
            mean_total_tokens: r.tokens.mean_total,
            done: r.done,
            failed: r.failed,
        }
    }
}

/// Rows sorted descending by `sort_by`; rows without that metric go last;
/// ties fall back to ascending run id.
pub fn rank_rows(mut rows: Vec<LeaderboardRow>, sort_by: MetricName) -> Leaderboard {
    rows.sort_by(|a, b| {
        let va = a.metrics.get(&sort_by).copied().flatten();
        let vb = b.metrics.get(&sort_by).copied().flatten();
        let primary = match (va, vb) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        primary.then_with(|| a.run_id.cmp(&b.run_id))
    });
    rows.dedup_by(|a, b| a.run_id == b.run_id);
    Leaderboard { sort_by, rows }
}

pub fn build_leaderboard(
    store: &RunStore,
    run_ids: &[String],
    sort_by: MetricName,
) -> Result<Leaderboard, RunError> {
    let rows = run_ids
        .iter()
        .map(|id| load_report(store, id).map(|r| LeaderboardRow::from_report(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rank_rows(rows, sort_by))
}

impl Leaderboard {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| rank | run | model | method |");
        for n in MetricName::ALL {
            let _ = write!(s, " {n} |");
        }
        s.push_str(" mean tokens |\n|---|---|---|---|");
        s.push_str(&"---|".repeat(MetricName::ALL.len() + 1));
        s.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, "| {} | {} | {} | {} |", i + 1, r.run_id, r.model, r.method);
            for n in MetricName::ALL {
                let _ = write!(s, " {} |", fmt_opt(r.metrics.get(&n).copied().flatten()));
            }
            let _ = writeln!(s, " {} |", fmt_opt(r.mean_total_tokens));
        }
        s
    }
}

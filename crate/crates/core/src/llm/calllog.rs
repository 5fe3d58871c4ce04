use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{ModelSpec, TokenUsage};

/// One line of `llm_calls.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub timestamp: DateTime<Utc>,
    pub provider: String,
    pub model_id: String,
    pub stage: String,
    /// Number of attempts made (1 when the first try settled it).
    pub attempt: u32,
    /// `ok` or the error code.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub usage: TokenUsage,
    pub estimated: bool,
    pub latency_ms: f64,
    #[serde(default)]
    pub downscaled_images: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub delays_ms: Vec<u64>,
}

impl CallRecord {
    pub(crate) fn new(model: &ModelSpec, stage: &str) -> Self {
        Self {
            timestamp: Utc::now(),
            provider: model.provider.clone(),
            model_id: model.model_id.clone(),
            stage: stage.to_string(),
            attempt: 0,
            status: String::new(),
            error: None,
            usage: TokenUsage::default(),
            estimated: false,
            latency_ms: 0.0,
            downscaled_images: 0,
            delays_ms: Vec::new(),
        }
    }
}

/// Append-only call log, optionally mirrored to a JSONL file. Writes are
/// serialized behind a mutex so concurrent region calls never interleave.
#[derive(Debug, Default)]
pub struct CallLog {
    path: Option<PathBuf>,
    inner: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Start a fresh log file at `path`, truncating any previous content.
    pub fn create(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        File::create(&path)?;
        Ok(Self {
            path: Some(path),
            inner: Mutex::new(Vec::new()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, record: CallRecord) -> io::Result<()> {
        let mut records = self.inner.lock().unwrap();
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().append(true).create(true).open(path)?;
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        records.push(record);
        Ok(())
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn usage_total(&self) -> TokenUsage {
        self.inner.lock().unwrap().iter().map(|r| r.usage).sum()
    }

    pub fn read_jsonl(path: &Path) -> io::Result<Vec<CallRecord>> {
        let f = File::open(path)?;
        BufReader::new(f)
            .lines()
            .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
            .map(|l| {
                let l = l?;
                serde_json::from_str(&l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .collect()
    }
}

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{RunConfig, RunError, RunState};
use crate::dataset::DatasetManifest;

pub const CONFIG_FILE: &str = "config.json";
pub const STATE_FILE: &str = "state.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const REPORT_FILE: &str = "report.json";
const LOCK_FILE: &str = ".lock";

/// Artifacts an instance directory may hold.
pub mod artifact {
    pub const GENERATED_HTML: &str = "generated.html";
    pub const GENERATED_PNG: &str = "generated.png";
    pub const REFERENCE_PNG: &str = "reference.png";
    pub const BLOCKS_REF: &str = "blocks_ref.json";
    pub const BLOCKS_GEN: &str = "blocks_gen.json";
    pub const CALL_LOG: &str = "llm_calls.jsonl";
    pub const METRICS: &str = "metrics.json";
    pub const GENERATION: &str = "generation.json";
}

/// Write `bytes` to `path` through a temporary sibling and a rename, so
/// readers see either the old or the new content, never a torn file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Held while an executor owns a run; released on drop.
#[derive(Debug)]
pub struct RunLock {
    _file: File,
}

/// On-disk layout under a data directory:
/// `runs/<run_id>/…`, `cache/references/<hash>/…` and `uploads/<token>/`.
#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reference_cache_dir(&self) -> PathBuf {
        self.root.join("cache").join("references")
    }

    pub fn uploads_dir(&self) -> PathBuf {
        self.root.join("uploads")
    }

    pub fn run_dir(&self, run_id: &str) -> PathBuf {
        self.runs_dir().join(run_id)
    }

    pub fn instance_dir(&self, run_id: &str, instance_id: &str) -> PathBuf {
        self.run_dir(run_id).join("instances").join(instance_id)
    }

    fn checked_dir(&self, run_id: &str) -> Result<PathBuf, RunError> {
        let valid = !run_id.is_empty() && run_id.chars().all(|c| c.is_ascii_alphanumeric());
        let dir = self.run_dir(run_id);
        if !valid || !dir.join(CONFIG_FILE).is_file() {
            return Err(RunError::RunNotFound(run_id.to_string()));
        }
        Ok(dir)
    }

    pub fn exists(&self, run_id: &str) -> bool {
        self.checked_dir(run_id).is_ok()
    }

    /// Create a fresh run directory. Fails if it already exists.
    pub(crate) fn create_run_dir(&self, run_id: &str) -> io::Result<PathBuf> {
        fs::create_dir_all(self.runs_dir())?;
        let dir = self.run_dir(run_id);
        fs::create_dir(&dir)?;
        fs::create_dir(dir.join("instances"))?;
        Ok(dir)
    }

    pub fn read_config(&self, run_id: &str) -> Result<RunConfig, RunError> {
        let dir = self.checked_dir(run_id)?;
        Ok(read_json(&dir.join(CONFIG_FILE))?)
    }

    pub fn read_state(&self, run_id: &str) -> Result<RunState, RunError> {
        let dir = self.checked_dir(run_id)?;
        let mut s: RunState = read_json(&dir.join(STATE_FILE))?;
        s.recount();
        Ok(s)
    }

    pub fn read_manifest(&self, run_id: &str) -> Result<DatasetManifest, RunError> {
        let dir = self.checked_dir(run_id)?;
        Ok(read_json(&dir.join(DATASET_FILE))?)
    }

    pub(crate) fn write_state(&self, state: &RunState) -> io::Result<()> {
        write_json(&self.run_dir(&state.run_id).join(STATE_FILE), state)
    }

    pub fn report_path(&self, run_id: &str) -> PathBuf {
        self.run_dir(run_id).join(REPORT_FILE)
    }

    /// Run ids present on disk, in lexicographic (creation) order.
    pub fn list_run_ids(&self) -> io::Result<Vec<String>> {
        let dir = self.runs_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|id| self.exists(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Take the executor lock for a run without blocking.
    pub fn lock(&self, run_id: &str) -> Result<RunLock, RunError> {
        let dir = self.checked_dir(run_id)?;
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        match file.try_lock() {
            Ok(()) => Ok(RunLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => {
                Err(RunError::RunAlreadyActive(run_id.to_string()))
            }
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    /// Whether some executor currently holds the run lock.
    pub fn is_active(&self, run_id: &str) -> bool {
        let Ok(dir) = self.checked_dir(run_id) else {
            return false;
        };
        let Ok(file) = File::options().read(true).open(dir.join(LOCK_FILE)) else {
            return false;
        };
        matches!(file.try_lock_shared(), Err(fs::TryLockError::WouldBlock))
    }
}

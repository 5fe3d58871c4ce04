//! Content-addressed cache of ground-truth renders, shared by every run in
//! one data directory.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::store::{read_json, write_json};
use super::RunError;
use crate::render::{RenderConfig, RenderError, RenderResult, Renderer};

const CACHE_SALT: &str = "uibench-reference-v1";
const SHOT: &str = "reference.png";
const META: &str = "render.json";

pub fn cache_key(html: &str, cfg: &RenderConfig) -> String {
    let mut h = Sha256::new();
    h.update(CACHE_SALT.as_bytes());
    h.update([0]);
    h.update(html.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(cfg).expect("render config serializes"));
    hex::encode(h.finalize())
}

pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    fn load(entry: &Path) -> Option<RenderResult> {
        let screenshot = fs::read(entry.join(SHOT)).ok()?;
        let mut r: RenderResult = read_json(&entry.join(META)).ok()?;
        r.screenshot = screenshot;
        Some(r)
    }

    /// Return the cached render of `html`, rendering and storing it first if
    /// needed. Entries appear atomically via a directory rename.
    pub async fn get_or_render(
        &self,
        html: &str,
        cfg: &RenderConfig,
        renderer: &dyn Renderer,
    ) -> Result<Result<RenderResult, RenderError>, RunError> {
        let entry = self.dir.join(cache_key(html, cfg));
        if let Some(hit) = Self::load(&entry) {
            return Ok(Ok(hit));
        }
        let result = match renderer.render(html, cfg).await {
            Ok(r) => r,
            Err(e) => return Ok(Err(e)),
        };
        fs::create_dir_all(&self.dir)?;
        let staging = tempfile::tempdir_in(&self.dir)?;
        fs::write(staging.path().join(SHOT), &result.screenshot)?;
        write_json(&staging.path().join(META), &result)?;
        let staged = staging.keep();
        if fs::rename(&staged, &entry).is_err() {
            // Another worker stored the same entry first.
            let _ = fs::remove_dir_all(&staged);
        }
        Ok(Ok(result))
    }
}

//! Dataset ingestion.
//!
//! A dataset is a flat directory of `<id>.png` screenshots, each optionally
//! paired with an `<id>.html` ground-truth document in the same directory.
//! Other files are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{GenericImageView, ImageFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Screenshots larger than this on either side produce a warning.
pub const OVERSIZED_SIDE: u32 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInstance {
    pub id: String,
    /// Path of the PNG screenshot.
    pub screenshot: PathBuf,
    pub width: u32,
    pub height: u32,
    pub ground_truth_code: Option<String>,
    /// Path of the ground-truth file, or the screenshot when there is none.
    pub source_path: PathBuf,
}

impl InputInstance {
    pub fn has_ground_truth(&self) -> bool {
        self.ground_truth_code.is_some()
    }

    pub fn read_screenshot(&self) -> std::io::Result<Vec<u8>> {
        fs::read(&self.screenshot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub root: PathBuf,
    /// Sorted by id.
    pub instances: Vec<InputInstance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// File name relative to the dataset root.
    pub screenshot: String,
    pub has_ground_truth: bool,
}

/// The `dataset.json` written into each run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub instances: Vec<ManifestEntry>,
}

impl Dataset {
    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            instances: self
                .instances
                .iter()
                .map(|i| ManifestEntry {
                    id: i.id.clone(),
                    screenshot: i
                        .screenshot
                        .file_name()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                    has_ground_truth: i.has_ground_truth(),
                })
                .collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&InputInstance> {
        self.instances.iter().find(|i| i.id == id)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("no .png screenshots found in {0}")]
    EmptyDataset(PathBuf),
    #[error("duplicate instance id {0:?}")]
    DuplicateId(String),
    #[error("instance id {0:?} is not filesystem-safe (allowed: A-Z a-z 0-9 . _ -)")]
    InvalidId(String),
    #[error("cannot decode image {path}: {reason}")]
    UnreadableImage { path: PathBuf, reason: String },
    #[error("ground truth {path} is unusable: {reason}")]
    InvalidGroundTruth { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DatasetError {
    pub fn code(&self) -> &'static str {
        match self {
            DatasetError::NotADirectory(_) => "DatasetNotFound",
            DatasetError::EmptyDataset(_) => "EmptyDataset",
            DatasetError::DuplicateId(_) => "DuplicateId",
            DatasetError::InvalidId(_) => "InvalidId",
            DatasetError::UnreadableImage { .. } => "UnreadableImage",
            DatasetError::InvalidGroundTruth { .. } => "InvalidGroundTruth",
            DatasetError::Io { .. } => "DatasetIo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum DatasetWarning {
    OversizedImage { width: u32, height: u32 },
    MissingHtmlRoot,
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Scan a dataset directory. Any instance that cannot be used is an error;
/// nothing is skipped silently.
pub fn scan_dataset(root: &Path) -> Result<Dataset, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::NotADirectory(root.to_path_buf()));
    }
    let mut pngs: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut htmls: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();

    for path in entries {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let target = if has_ext(&path, "png") {
            &mut pngs
        } else if has_ext(&path, "html") {
            &mut htmls
        } else {
            continue;
        };
        if target.insert(stem.to_string(), path.clone()).is_some() {
            return Err(DatasetError::DuplicateId(stem.to_string()));
        }
    }
    if pngs.is_empty() {
        return Err(DatasetError::EmptyDataset(root.to_path_buf()));
    }

    let mut instances = Vec::with_capacity(pngs.len());
    for (id, png) in pngs {
        if !is_valid_id(&id) {
            return Err(DatasetError::InvalidId(id));
        }
        let img = image::ImageReader::open(&png)
            .map_err(io_err(&png))?
            .with_guessed_format()
            .map_err(io_err(&png))?
            .decode()
            .map_err(|e| DatasetError::UnreadableImage {
                path: png.clone(),
                reason: e.to_string(),
            })?;
        let (width, height) = img.dimensions();
        if width == 0 || height == 0 {
            return Err(DatasetError::UnreadableImage {
                path: png,
                reason: "empty raster".into(),
            });
        }
        let (ground_truth_code, source_path) = match htmls.get(&id) {
            Some(html) => {
                let bytes = fs::read(html).map_err(io_err(html))?;
                let text = String::from_utf8(bytes).map_err(|_| DatasetError::InvalidGroundTruth {
                    path: html.clone(),
                    reason: "not UTF-8".into(),
                })?;
                if text.trim().is_empty() {
                    return Err(DatasetError::InvalidGroundTruth {
                        path: html.clone(),
                        reason: "empty document".into(),
                    });
                }
                (Some(text), html.clone())
            }
            None => (None, png.clone()),
        };
        instances.push(InputInstance {
            id,
            screenshot: png,
            width,
            height,
            ground_truth_code,
            source_path,
        });
    }

    let name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        name,
        root: root.to_path_buf(),
        instances,
    })
}

pub fn validate_instance(inst: &InputInstance) -> Vec<DatasetWarning> {
    let mut warnings = Vec::new();
    if inst.width > OVERSIZED_SIDE || inst.height > OVERSIZED_SIDE {
        warnings.push(DatasetWarning::OversizedImage {
            width: inst.width,
            height: inst.height,
        });
    }
    if let Some(code) = &inst.ground_truth_code {
        if !code.to_ascii_lowercase().contains("<html") {
            warnings.push(DatasetWarning::MissingHtmlRoot);
        }
    }
    warnings
}

/// Decode PNG or JPEG bytes and return them as PNG.
pub fn to_png(bytes: &[u8]) -> Result<Vec<u8>, String> {
    let format = image::guess_format(bytes).map_err(|e| e.to_string())?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(format!("unsupported image format {format:?}"));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| e.to_string())?;
    if img.width() == 0 || img.height() == 0 {
        return Err("empty raster".into());
    }
    if format == ImageFormat::Png {
        return Ok(bytes.to_vec());
    }
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out)
}

/// Turn an arbitrary file name into an instance id: the stem with unsafe
/// characters replaced by `_`.
pub fn sanitize_id(file_name: &str) -> String {
    let stem = Path::new(file_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("");
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect();
    if id.is_empty() { "image".into() } else { id }
}

/// Materialize uploaded images as a dataset directory. Every image must
/// decode; ids come from the file names, suffixed `-2`, `-3`, … on clashes.
pub fn write_image_dataset(
    dir: &Path,
    images: &[(String, Vec<u8>)],
) -> Result<Vec<String>, DatasetError> {
    if images.is_empty() {
        return Err(DatasetError::EmptyDataset(dir.to_path_buf()));
    }
    let mut converted = Vec::with_capacity(images.len());
    for (name, bytes) in images {
        let png = to_png(bytes).map_err(|reason| DatasetError::UnreadableImage {
            path: PathBuf::from(name),
            reason,
        })?;
        converted.push((sanitize_id(name), png));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut ids: Vec<String> = Vec::new();
    for (base, png) in converted {
        let mut id = base.clone();
        let mut n = 2;
        while ids.contains(&id) {
            id = format!("{base}-{n}");
            n += 1;
        }
        let path = dir.join(format!("{id}.png"));
        fs::write(&path, png).map_err(io_err(&path))?;
        ids.push(id);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids() {
        assert!(is_valid_id("a-1.b_c"));
        assert!(!is_valid_id(""));
        assert!(!is_valid_id("a b"));
        assert!(!is_valid_id("é"));
        assert_eq!(sanitize_id("my shot (1).jpg"), "my_shot__1_");
    }
}

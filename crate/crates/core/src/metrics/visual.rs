//! Image embeddings for whole-page visual similarity.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use image::imageops::FilterType;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    Unavailable(String),
    #[error("image could not be decoded: {0}")]
    Decode(String),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    /// Name recorded in metric reports.
    fn name(&self) -> &str;
    async fn embed(&self, png: &[u8]) -> Result<Vec<f32>, EmbedError>;
}

/// Which backend a run uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbeddingConfig {
    #[default]
    BuiltinHist,
    ClipService { url: String },
}

impl EmbeddingConfig {
    pub fn build(&self) -> Arc<dyn EmbeddingBackend> {
        match self {
            EmbeddingConfig::BuiltinHist => Arc::new(HistogramEmbedding),
            EmbeddingConfig::ClipService { url } => Arc::new(ClipService::new(url)),
        }
    }
}

/// Side of the square every image is resized to.
pub const HIST_RESIZE: u32 = 64;
pub const HIST_BINS: usize = 8;
pub const THUMB_SIDE: usize = 8;

/// Deterministic fallback embedding: 8-bin histogram per RGB channel
/// (fractions of pixels) followed by an 8×8 grayscale thumbnail (block means
/// of Rec.601 luma in [0, 1]), all L2-normalized. Images are first resized
/// to 64×64 with a triangle filter.
#[derive(Debug, Clone, Copy, Default)]
pub struct HistogramEmbedding;

impl HistogramEmbedding {
    pub fn embed_image(img: &image::DynamicImage) -> Vec<f32> {
        let rgb = img.to_rgb8();
        let small = image::imageops::resize(&rgb, HIST_RESIZE, HIST_RESIZE, FilterType::Triangle);
        let side = HIST_RESIZE as usize;
        let cell = side / THUMB_SIDE;
        let n = (side * side) as f64;

        let mut hist = [[0f64; HIST_BINS]; 3];
        let mut thumb = [0f64; THUMB_SIDE * THUMB_SIDE];
        for (x, y, px) in small.enumerate_pixels() {
            for c in 0..3 {
                hist[c][usize::from(px[c] >> 5)] += 1.0;
            }
            let luma = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
            thumb[(y as usize / cell) * THUMB_SIDE + x as usize / cell] += luma / 255.0;
        }
        let per_cell = (cell * cell) as f64;
        let mut v: Vec<f64> = hist.iter().flatten().map(|c| c / n).collect();
        v.extend(thumb.iter().map(|t| t / per_cell));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter()
            .map(|x| if norm > 0.0 { (x / norm) as f32 } else { 0.0 })
            .collect()
    }
}

#[async_trait]
impl EmbeddingBackend for HistogramEmbedding {
    fn name(&self) -> &str {
        "builtin-hist"
    }

    async fn embed(&self, png: &[u8]) -> Result<Vec<f32>, EmbedError> {
        let img = image::load_from_memory(png).map_err(|e| EmbedError::Decode(e.to_string()))?;
        Ok(Self::embed_image(&img))
    }
}

/// Remote embedding service: `POST {url}/embed` with a PNG body, answering
/// `{"vector": [...]}`.
#[derive(Debug, Clone)]
pub struct ClipService {
    url: String,
    client: reqwest::Client,
}

impl ClipService {
    pub fn new(url: &str) -> Self {
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("reqwest client");
        Self {
            url: url.trim_end_matches('/').to_string(),
            client,
        }
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f32>,
}

#[async_trait]
impl EmbeddingBackend for ClipService {
    fn name(&self) -> &str {
        "clip-service"
    }

    async fn embed(&self, png: &[u8]) -> Result<Vec<f32>, EmbedError> {
        let resp = self
            .client
            .post(format!("{}/embed", self.url))
            .header("content-type", "image/png")
            .body(png.to_vec())
            .send()
            .await
            .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::Unavailable(format!("status {}", resp.status())));
        }
        let body: EmbedResponse = resp
            .json()
            .await
            .map_err(|e| EmbedError::Unavailable(format!("bad response: {e}")))?;
        Ok(body.vector)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, EmbedError> {
    if a.len() != b.len() {
        return Err(EmbedError::DimensionMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity between the embeddings of the generated and the
/// reference screenshot.
pub async fn visual_similarity(
    generated_png: &[u8],
    reference_png: &[u8],
    backend: &dyn EmbeddingBackend,
) -> Result<f64, EmbedError> {
    let g = backend.embed(generated_png).await?;
    let o = backend.embed(reference_png).await?;
    cosine(&g, &o)
}

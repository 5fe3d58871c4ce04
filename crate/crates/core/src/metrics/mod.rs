//! The metric suite: high-level similarity (code and visual), fine-grained
//! block matching (block size, text, color, position) and resource usage.

pub mod color;
pub mod dice;
pub mod levenshtein;
pub mod matching;
pub mod scores;
pub mod visual;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use color::{ciede2000, color_similarity, Lab};
pub use dice::dice;
pub use levenshtein::{code_similarity, levenshtein};
pub use matching::{match_blocks, BlockMatching, MatchedPair, DEFAULT_MATCH_THRESHOLD};
pub use scores::PageDims;
pub use visual::{visual_similarity, EmbeddingBackend, EmbeddingConfig, HistogramEmbedding};

use crate::llm::TokenUsage;
use crate::render::Block;

/// Metric knobs recorded in every run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    #[serde(default = "default_threshold")]
    pub match_threshold: f64,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
}

fn default_threshold() -> f64 {
    DEFAULT_MATCH_THRESHOLD
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            embedding: EmbeddingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    CodeSimilarity,
    VisualSimilarity,
    BlockMatch,
    TextSimilarity,
    ColorSimilarity,
    PositionSimilarity,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::CodeSimilarity,
        MetricName::VisualSimilarity,
        MetricName::BlockMatch,
        MetricName::TextSimilarity,
        MetricName::ColorSimilarity,
        MetricName::PositionSimilarity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::CodeSimilarity => "code_similarity",
            MetricName::VisualSimilarity => "visual_similarity",
            MetricName::BlockMatch => "block_match",
            MetricName::TextSimilarity => "text_similarity",
            MetricName::ColorSimilarity => "color_similarity",
            MetricName::PositionSimilarity => "position_similarity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", content = "detail")]
pub enum UnavailableReason {
    NoGroundTruth,
    NoMatches,
    EmbeddingBackendUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnavailableMetric {
    pub metric: MetricName,
    pub reason: UnavailableReason,
}

/// Per-pair detail kept for traceability from scores back to blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    pub ref_index: usize,
    pub gen_index: usize,
    pub ref_text: String,
    pub gen_text: String,
    pub dice: f64,
    pub delta_e00: f64,
    pub color_similarity: f64,
    pub position_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingDetail {
    pub pairs: Vec<PairDetail>,
    pub unmatched_ref: Vec<usize>,
    pub unmatched_gen: Vec<usize>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub code_similarity: Option<f64>,
    pub visual_similarity: Option<f64>,
    pub block_match: Option<f64>,
    pub text_similarity: Option<f64>,
    pub color_similarity: Option<f64>,
    pub position_similarity: Option<f64>,
    pub token_usage: TokenUsage,
    pub embedding_backend: String,
    pub match_threshold: f64,
    /// Unit of block size used by `block_match`.
    pub block_size_unit: String,
    pub unavailable: Vec<UnavailableMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching: Option<MatchingDetail>,
}

impl MetricReport {
    pub fn get(&self, metric: MetricName) -> Option<f64> {
        match metric {
            MetricName::CodeSimilarity => self.code_similarity,
            MetricName::VisualSimilarity => self.visual_similarity,
            MetricName::BlockMatch => self.block_match,
            MetricName::TextSimilarity => self.text_similarity,
            MetricName::ColorSimilarity => self.color_similarity,
            MetricName::PositionSimilarity => self.position_similarity,
        }
    }
}

/// Everything needed to score one instance.
#[derive(Debug, Clone)]
pub struct EvaluationPair {
    /// Input mockup, PNG bytes.
    pub reference_screenshot: Vec<u8>,
    /// Ground-truth code.
    pub reference_code: Option<String>,
    /// Blocks extracted from the rendered ground truth, with that page's size.
    pub reference_blocks: Option<(Vec<Block>, PageDims)>,
    /// Generated code.
    pub generated_code: String,
    /// Rendered generated page, PNG bytes.
    pub generated_screenshot: Vec<u8>,
    pub generated_blocks: Vec<Block>,
    pub generated_dims: PageDims,
}

/// Score one instance. Never fails: anything that cannot be computed is
/// listed in `unavailable` with a reason.
pub async fn evaluate(
    pair: &EvaluationPair,
    usage: TokenUsage,
    config: &MetricConfig,
    backend: &dyn EmbeddingBackend,
) -> MetricReport {
    let mut unavailable = Vec::new();
    let mut mark = |metric, reason: UnavailableReason| {
        unavailable.push(UnavailableMetric { metric, reason });
    };

    let visual = match visual_similarity(
        &pair.generated_screenshot,
        &pair.reference_screenshot,
        backend,
    )
    .await
    {
        Ok(v) => Some(v),
        Err(e) => {
            mark(
                MetricName::VisualSimilarity,
                UnavailableReason::EmbeddingBackendUnavailable(e.to_string()),
            );
            None
        }
    };

    let mut report = MetricReport {
        code_similarity: None,
        visual_similarity: visual,
        block_match: None,
        text_similarity: None,
        color_similarity: None,
        position_similarity: None,
        token_usage: usage,
        embedding_backend: backend.name().to_string(),
        match_threshold: config.match_threshold,
        block_size_unit: "characters".into(),
        unavailable: Vec::new(),
        matching: None,
    };

    match (&pair.reference_code, &pair.reference_blocks) {
        (Some(code), Some((ref_blocks, ref_dims))) => {
            report.code_similarity = Some(code_similarity(&pair.generated_code, code));
            let gen_blocks = &pair.generated_blocks;
            let m = match_blocks(ref_blocks, gen_blocks, config.match_threshold);
            report.block_match = Some(scores::block_match_score(&m, ref_blocks, gen_blocks));
            report.text_similarity = scores::text_similarity_score(&m);
            report.color_similarity = scores::color_similarity_score(&m, ref_blocks, gen_blocks);
            report.position_similarity = scores::position_similarity_score(
                &m,
                ref_blocks,
                gen_blocks,
                *ref_dims,
                pair.generated_dims,
            );
            if m.pairs.is_empty() {
                for metric in [
                    MetricName::TextSimilarity,
                    MetricName::ColorSimilarity,
                    MetricName::PositionSimilarity,
                ] {
                    mark(metric, UnavailableReason::NoMatches);
                }
            }
            report.matching = Some(matching_detail(
                &m,
                ref_blocks,
                gen_blocks,
                *ref_dims,
                pair.generated_dims,
            ));
        }
        _ => {
            for metric in [
                MetricName::CodeSimilarity,
                MetricName::BlockMatch,
                MetricName::TextSimilarity,
                MetricName::ColorSimilarity,
                MetricName::PositionSimilarity,
            ] {
                mark(metric, UnavailableReason::NoGroundTruth);
            }
        }
    }
    report.unavailable = unavailable;
    report
}

fn matching_detail(
    m: &BlockMatching,
    reference: &[Block],
    generated: &[Block],
    ref_dims: PageDims,
    gen_dims: PageDims,
) -> MatchingDetail {
    let pairs = m
        .pairs
        .iter()
        .map(|p| {
            let r = &reference[p.ref_index];
            let g = &generated[p.gen_index];
            let single = BlockMatching {
                pairs: vec![p.clone()],
                ..Default::default()
            };
            PairDetail {
                ref_index: p.ref_index,
                gen_index: p.gen_index,
                ref_text: r.text.clone(),
                gen_text: g.text.clone(),
                dice: p.dice,
                delta_e00: ciede2000(Lab::from_srgb(r.color), Lab::from_srgb(g.color)),
                color_similarity: color_similarity(r.color, g.color),
                position_similarity: scores::position_similarity_score(
                    &single, reference, generated, ref_dims, gen_dims,
                )
                .unwrap_or(0.0),
            }
        })
        .collect();
    MatchingDetail {
        pairs,
        unmatched_ref: m.unmatched_ref.clone(),
        unmatched_gen: m.unmatched_gen.clone(),
        objective: m.objective,
    }
}

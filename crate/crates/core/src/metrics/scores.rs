//! Fine-grained scores computed over an aligned block matching.

use serde::{Deserialize, Serialize};

use super::color::color_similarity;
use super::matching::BlockMatching;
use crate::render::Block;

/// Page size in CSS pixels, used to normalize block centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageDims {
    pub width: f64,
    pub height: f64,
}

/// Block size is the code-point length of its text.
pub fn block_size(b: &Block) -> usize {
    b.text.chars().count()
}

/// Matched block sizes on both sides over all block sizes on both sides.
/// Two empty pages match perfectly.
pub fn block_match_score(matching: &BlockMatching, reference: &[Block], generated: &[Block]) -> f64 {
    let total: usize = reference.iter().chain(generated).map(block_size).sum();
    if total == 0 {
        return 1.0;
    }
    let matched: usize = matching
        .pairs
        .iter()
        .map(|p| block_size(&reference[p.ref_index]) + block_size(&generated[p.gen_index]))
        .sum();
    matched as f64 / total as f64
}

/// Mean Dice over matched pairs, or `None` without matches.
pub fn text_similarity_score(matching: &BlockMatching) -> Option<f64> {
    mean(matching.pairs.iter().map(|p| p.dice))
}

/// Mean of `max(0, 1 - ΔE00/100)` over matched pairs.
pub fn color_similarity_score(
    matching: &BlockMatching,
    reference: &[Block],
    generated: &[Block],
) -> Option<f64> {
    mean(
        matching
            .pairs
            .iter()
            .map(|p| color_similarity(reference[p.ref_index].color, generated[p.gen_index].color)),
    )
}

fn normalized_center(b: &Block, dims: PageDims) -> (f64, f64) {
    let cx = b.bbox.x + b.bbox.w / 2.0;
    let cy = b.bbox.y + b.bbox.h / 2.0;
    let nx = if dims.width > 0.0 { cx / dims.width } else { 0.0 };
    let ny = if dims.height > 0.0 { cy / dims.height } else { 0.0 };
    (nx.clamp(0.0, 1.0), ny.clamp(0.0, 1.0))
}

/// `1 - ‖c_ref - c_gen‖ / √2` for block centers normalized by their own page.
pub fn pair_position_similarity(a: (f64, f64), b: (f64, f64)) -> f64 {
    let d = (a.0 - b.0).hypot(a.1 - b.1);
    (1.0 - d / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Mean center-alignment similarity over matched pairs.
pub fn position_similarity_score(
    matching: &BlockMatching,
    reference: &[Block],
    generated: &[Block],
    ref_dims: PageDims,
    gen_dims: PageDims,
) -> Option<f64> {
    mean(matching.pairs.iter().map(|p| {
        pair_position_similarity(
            normalized_center(&reference[p.ref_index], ref_dims),
            normalized_center(&generated[p.gen_index], gen_dims),
        )
    }))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

//! Segment, generate per region, assemble.

use std::io::Cursor;

use async_trait::async_trait;
use futures::future::join_all;
use image::{DynamicImage, ImageFormat};
use serde_json::Value;

use super::segment::{segment, Rect, SegmentParams};
use super::{
    extract_html, param_f64, param_u64, reject_unknown, Fragment, GenerationArtifact,
    GenerationMethod, MethodContext, MethodError, ParamMap,
};
use crate::llm::{CallLog, CallOptions, ChatMessage, Part};
use crate::metrics::visual_similarity;

/// Bumped whenever either prompt template changes.
pub const DECOMPOSE_PROMPT_VERSION: &str = "decompose-v1";

/// Placeholders: `{x}`, `{y}`, `{w}`, `{h}`, `{page_w}`, `{page_h}`.
pub const REGION_PROMPT: &str = "This image is one region of a webpage screenshot. The region is {w}x{h} pixels and sits at x={x}, y={y} in a {page_w}x{page_h} page. Return a self-contained HTML fragment styled with Tailwind CSS classes that reproduces exactly this region. Use \"placeholder.png\" to replace the images. Do not include <html>, <head> or <body> tags. Respond with the fragment only, in one ```html code block.";

/// Placeholders: `{page_w}`, `{page_h}`, `{fragments}`, `{candidate}`.
pub const ASSEMBLY_PROMPT: &str = "The HTML pieces below each reproduce one region of a {page_w}x{page_h} webpage screenshot, listed in reading order with their bounding boxes. Merge them into one complete HTML document styled with Tailwind CSS that reproduces the whole page, keeping every region's content and position. Use \"placeholder.png\" to replace the images.{candidate}\n\n{fragments}\nRespond with the complete HTML document in one ```html code block.";

const KNOWN: [&str; 6] = [
    "min_band_px",
    "uniformity_tol",
    "max_depth",
    "max_regions",
    "candidates",
    "prompt_version",
];

#[derive(Debug, Clone, PartialEq)]
struct Params {
    segment: SegmentParams,
    candidates: u32,
}

fn parse(params: &ParamMap) -> Result<Params, MethodError> {
    reject_unknown(params, &KNOWN)?;
    let d = SegmentParams::default();
    let segment = SegmentParams {
        min_band_px: param_u64(params, "min_band_px")?.map_or(d.min_band_px, |v| v as u32),
        uniformity_tol: param_f64(params, "uniformity_tol")?.unwrap_or(d.uniformity_tol),
        max_depth: param_u64(params, "max_depth")?.map_or(d.max_depth, |v| v as u32),
        max_regions: param_u64(params, "max_regions")?.map_or(d.max_regions, |v| v as usize),
    };
    let candidates = param_u64(params, "candidates")?.unwrap_or(1) as u32;
    if segment.min_band_px == 0 {
        return Err(MethodError::InvalidParams("min_band_px must be ≥ 1".into()));
    }
    if !(segment.uniformity_tol >= 0.0) {
        return Err(MethodError::InvalidParams("uniformity_tol must be ≥ 0".into()));
    }
    if segment.max_regions == 0 {
        return Err(MethodError::InvalidParams("max_regions must be ≥ 1".into()));
    }
    if candidates == 0 {
        return Err(MethodError::InvalidParams("candidates must be ≥ 1".into()));
    }
    match params.get("prompt_version") {
        None => {}
        Some(Value::String(v)) if v == DECOMPOSE_PROMPT_VERSION => {}
        Some(v) => {
            return Err(MethodError::InvalidParams(format!(
                "prompt_version {v} is not available (current: {DECOMPOSE_PROMPT_VERSION})"
            )))
        }
    }
    Ok(Params {
        segment,
        candidates,
    })
}

/// Index of the best score; the lowest index wins ties. Missing scores
/// never win over present ones.
pub fn select_candidate(scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
}

fn fill(template: &str, vars: &[(&str, String)]) -> String {
    vars.iter().fold(template.to_string(), |acc, (k, v)| {
        acc.replace(&format!("{{{k}}}"), v)
    })
}

fn crop_png(img: &DynamicImage, r: Rect) -> Result<Vec<u8>, MethodError> {
    let mut out = Vec::new();
    img.crop_imm(r.x, r.y, r.w, r.h)
        .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .map_err(|e| MethodError::Input(e.to_string()))?;
    Ok(out)
}

/// Reference segment-generate-assemble method.
pub struct DecomposeMethod;

#[async_trait]
impl GenerationMethod for DecomposeMethod {
    fn name(&self) -> &str {
        "decompose"
    }

    fn description(&self) -> &str {
        "separator-band segmentation, one call per region, then assembly with optional candidate selection"
    }

    fn resolve_params(&self, given: &ParamMap) -> Result<ParamMap, MethodError> {
        let p = parse(given)?;
        Ok(ParamMap::from([
            ("min_band_px".into(), Value::from(p.segment.min_band_px)),
            ("uniformity_tol".into(), Value::from(p.segment.uniformity_tol)),
            ("max_depth".into(), Value::from(p.segment.max_depth)),
            ("max_regions".into(), Value::from(p.segment.max_regions)),
            ("candidates".into(), Value::from(p.candidates)),
            ("prompt_version".into(), Value::from(DECOMPOSE_PROMPT_VERSION)),
        ]))
    }

    async fn generate(
        &self,
        ctx: &MethodContext<'_>,
        params: &ParamMap,
    ) -> Result<GenerationArtifact, MethodError> {
        let p = parse(params)?;
        let img = image::load_from_memory(ctx.screenshot)
            .map_err(|e| MethodError::Input(format!("screenshot: {e}")))?;
        let (page_w, page_h) = (img.width(), img.height());
        let seg = segment(&img.to_rgb8(), &p.segment);
        let leaves: Vec<Rect> = seg.root.leaves().iter().map(|l| l.bbox).collect();

        // Region calls run concurrently, each into its own log, and the logs
        // are appended in leaf order so the instance log is deterministic.
        let calls = leaves.iter().enumerate().map(|(i, r)| {
            let img = &img;
            async move {
                let log = CallLog::in_memory();
                let stage = format!("region:{i}");
                let result = async {
                    let crop = crop_png(img, *r)?;
                    let prompt = fill(
                        REGION_PROMPT,
                        &[
                            ("x", r.x.to_string()),
                            ("y", r.y.to_string()),
                            ("w", r.w.to_string()),
                            ("h", r.h.to_string()),
                            ("page_w", page_w.to_string()),
                            ("page_h", page_h.to_string()),
                        ],
                    );
                    let messages = [ChatMessage::user(vec![Part::text(prompt), Part::png(crop)])];
                    let opts = CallOptions {
                        policy: ctx.retry,
                        log: &log,
                        stage: &stage,
                    };
                    let reply = ctx
                        .gateway
                        .complete(ctx.model, &messages, opts)
                        .await
                        .map_err(|source| MethodError::Llm {
                            stage: "region".into(),
                            region: Some(i.to_string()),
                            source,
                        })?;
                    extract_html(&reply.text).map_err(|e| e.in_stage(&stage))
                }
                .await;
                (log, result)
            }
        });
        let mut fragments = Vec::with_capacity(leaves.len());
        let mut first_error = None;
        for (i, (log, result)) in join_all(calls).await.into_iter().enumerate() {
            for rec in log.records() {
                ctx.call_log
                    .append(rec)
                    .map_err(|e| MethodError::Input(format!("call log: {e}")))?;
            }
            match result {
                Ok(html) => fragments.push(Fragment {
                    region: i,
                    bbox: leaves[i],
                    html,
                }),
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
        }
        if let Some(e) = first_error {
            for f in &fragments {
                tracing::info!(region = f.region, html = %f.html, "fragment kept before failure");
            }
            return Err(e);
        }

        let listing: String = fragments
            .iter()
            .map(|f| {
                format!(
                    "Region {} (x={}, y={}, w={}, h={}):\n```html\n{}\n```\n",
                    f.region + 1,
                    f.bbox.x,
                    f.bbox.y,
                    f.bbox.w,
                    f.bbox.h,
                    f.html
                )
            })
            .collect();

        let k = p.candidates;
        let mut candidates = Vec::with_capacity(k as usize);
        for c in 0..k {
            let candidate_note = if k > 1 {
                format!(" This is candidate {} of {k}.", c + 1)
            } else {
                String::new()
            };
            let prompt = fill(
                ASSEMBLY_PROMPT,
                &[
                    ("page_w", page_w.to_string()),
                    ("page_h", page_h.to_string()),
                    ("candidate", candidate_note),
                    ("fragments", listing.clone()),
                ],
            );
            let stage = format!("assemble:{c}");
            let opts = CallOptions {
                policy: ctx.retry,
                log: ctx.call_log,
                stage: &stage,
            };
            let reply = ctx
                .gateway
                .complete(ctx.model, &[ChatMessage::user(vec![Part::text(prompt)])], opts)
                .await
                .map_err(|source| MethodError::Llm {
                    stage: "assemble".into(),
                    region: None,
                    source,
                })?;
            candidates.push(extract_html(&reply.text).map_err(|e| e.in_stage(&stage))?);
        }

        let (selected, scores) = if k > 1 {
            let mut scores = Vec::with_capacity(candidates.len());
            for (c, html) in candidates.iter().enumerate() {
                let score = match ctx.renderer.render(html, ctx.render_config).await {
                    Ok(r) => visual_similarity(&r.screenshot, ctx.screenshot, ctx.embedding)
                        .await
                        .ok(),
                    Err(e) => {
                        tracing::warn!(candidate = c, error = %e, "candidate render failed");
                        None
                    }
                };
                scores.push(score);
            }
            let best = select_candidate(&scores).ok_or_else(|| MethodError::Render {
                stage: "select".into(),
                source: crate::render::RenderError::Invalid(
                    "no candidate could be rendered and scored".into(),
                ),
            })?;
            (best, scores)
        } else {
            (0, Vec::new())
        };

        Ok(GenerationArtifact {
            generated_code: candidates.swap_remove(selected),
            region_tree: Some(seg.root),
            regions_capped: seg.capped,
            call_log_ref: None,
            usage_total: ctx.call_log.usage_total(),
            candidates_considered: k,
            candidate_scores: scores,
            selected_candidate: (k > 1).then_some(selected),
            fragments,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(select_candidate(&[Some(0.8), Some(0.8)]), Some(0));
        assert_eq!(select_candidate(&[Some(0.1), Some(0.9), Some(0.9)]), Some(1));
        assert_eq!(select_candidate(&[None, Some(0.2)]), Some(1));
        assert_eq!(select_candidate(&[None, None]), None);
    }

    #[test]
    fn params_resolve_with_defaults() {
        let m = DecomposeMethod;
        let r = m.resolve_params(&ParamMap::new()).unwrap();
        assert_eq!(r["min_band_px"], Value::from(10));
        assert_eq!(r["uniformity_tol"], Value::from(4.0));
        assert_eq!(r["max_depth"], Value::from(2));
        assert_eq!(r["max_regions"], Value::from(16));
        assert_eq!(r["candidates"], Value::from(1));
        assert!(m
            .resolve_params(&ParamMap::from([("bogus".into(), Value::from(1))]))
            .is_err());
        assert!(m
            .resolve_params(&ParamMap::from([("candidates".into(), Value::from(0))]))
            .is_err());
    }

    #[test]
    fn templates_fill() {
        let s = fill("a {x} b {y}", &[("x", "1".into()), ("y", "2".into())]);
        assert_eq!(s, "a 1 b 2");
    }
}

//! In-page block extraction.

use serde::Deserialize;
use serde_json::Value;

use super::{BBox, Block};

/// Walks the body in document order and returns one entry per visible
/// element that owns non-empty text. Colors are resolved through a 1×1
/// canvas so any CSS color space comes back as 8-bit sRGB.
pub(crate) const EXTRACT_BLOCKS_JS: &str = r#"
(() => {
  const SKIP = new Set(['SCRIPT', 'STYLE', 'NOSCRIPT', 'TEMPLATE', 'HEAD', 'TITLE', 'META', 'LINK']);
  const canvas = document.createElement('canvas');
  canvas.width = 1;
  canvas.height = 1;
  const ctx = canvas.getContext('2d', { willReadFrequently: true });
  const toRgb = (css) => {
    ctx.clearRect(0, 0, 1, 1);
    ctx.fillStyle = '#000';
    ctx.fillStyle = css;
    ctx.fillRect(0, 0, 1, 1);
    const d = ctx.getImageData(0, 0, 1, 1).data;
    return [d[0], d[1], d[2]];
  };
  const opaque = (el) => {
    for (let a = el; a && a.nodeType === 1; a = a.parentElement) {
      if (parseFloat(getComputedStyle(a).opacity) <= 0) return false;
    }
    return true;
  };
  const out = [];
  const root = document.body;
  if (!root) return out;
  const walker = document.createTreeWalker(root, NodeFilter.SHOW_ELEMENT);
  for (let el = root; el; el = walker.nextNode()) {
    if (SKIP.has(el.tagName)) continue;
    let own = '';
    for (const n of el.childNodes) {
      if (n.nodeType === Node.TEXT_NODE) own += n.data + ' ';
    }
    const text = own.replace(/\s+/g, ' ').trim();
    if (!text) continue;
    const cs = getComputedStyle(el);
    if (cs.display === 'none' || cs.visibility !== 'visible') continue;
    const r = el.getBoundingClientRect();
    if (!(r.width > 0 && r.height > 0)) continue;
    if (!opaque(el)) continue;
    out.push({
      text,
      bbox: { x: r.left + window.scrollX, y: r.top + window.scrollY, w: r.width, h: r.height },
      color: toRgb(cs.color),
    });
  }
  return out;
})()
"#;

#[derive(Deserialize)]
struct RawBlock {
    text: String,
    bbox: BBox,
    color: [u8; 3],
}

pub(crate) fn parse_blocks(value: &Value) -> Result<Vec<Block>, String> {
    let raw: Vec<RawBlock> = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
    Ok(raw
        .into_iter()
        .map(|b| Block {
            text: super::normalize_block_text(&b.text),
            bbox: b.bbox,
            color: b.color,
        })
        .filter(|b| !b.text.is_empty() && b.bbox.w > 0.0 && b.bbox.h > 0.0)
        .collect())
}

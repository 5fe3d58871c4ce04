#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use uibench_core::llm::{LlmGateway, TokenUsage};
use uibench_core::method::MethodRegistry;
use uibench_core::metrics::{evaluate, EmbeddingBackend, EvaluationPair, HistogramEmbedding, MetricConfig, MetricReport};
use uibench_core::render::{ChromeOptions, ChromeRenderer, RenderConfig, Renderer};
use uibench_core::run::{Engine, RunStore};

pub const PAGES: [(&str, &str); 6] = [
    (
        "p1",
        "<html><body style='margin:0;font-family:sans-serif'><h1 style='color:#1d4ed8'>Welcome home</h1><p>Simple landing page text.</p></body></html>",
    ),
    (
        "p2",
        "<html><body><nav><a href='#'>Home</a> <a href='#'>About</a></nav><h2 style='color:rgb(200,30,30)'>Pricing plans</h2><ul><li>Basic tier</li><li>Pro tier</li></ul></body></html>",
    ),
    (
        "p3",
        "<html><body class='bg-gray-100'><div class='p-8'><h1 class='text-3xl font-bold text-green-700'>Dashboard</h1><p class='mt-4 text-gray-600'>Latest numbers at a glance</p></div></body></html>",
    ),
    (
        "p4",
        "<html><body><table><tr><td>Name</td><td>Score</td></tr><tr><td>Ada</td><td>97</td></tr></table><footer style='margin-top:300px'>Footer note</footer></body></html>",
    ),
    (
        "p5",
        "<html><body style='background:#222;color:#eee'><header><h1>Dark mode blog</h1></header><article><p>First post body with a few words.</p><img src='hero.jpg' width='300' height='120'></article></body></html>",
    ),
    (
        "p6",
        "<html><body><form><label>Email address</label><input type='text'><button>Subscribe now</button></form></body></html>",
    ),
];

pub fn fast_config() -> RenderConfig {
    RenderConfig {
        settle_ms: 50,
        ..RenderConfig::default()
    }
}

pub fn chrome() -> Arc<ChromeRenderer> {
    Arc::new(ChromeRenderer::new(ChromeOptions::default()).expect("Chromium (set UIBENCH_CHROME)"))
}

/// Write `<id>.html` and the screenshot our renderer makes of it.
pub async fn write_dataset(dir: &Path, pages: &[(&str, &str)], renderer: &dyn Renderer, with_html: bool) {
    std::fs::create_dir_all(dir).unwrap();
    for (id, html) in pages {
        let r = renderer.render(html, &fast_config()).await.unwrap();
        std::fs::write(dir.join(format!("{id}.png")), &r.screenshot).unwrap();
        if with_html {
            std::fs::write(dir.join(format!("{id}.html")), html).unwrap();
        }
    }
}

pub fn engine(data: &Path, renderer: Arc<ChromeRenderer>) -> Engine {
    Engine::new(
        RunStore::new(data),
        Arc::new(LlmGateway::with_default_providers()),
        MethodRegistry::with_builtin(),
        renderer,
    )
}
/// Render both pages and evaluate `generated` against `reference`, the
/// reference screenshot standing in for the input mockup.
pub async fn evaluate_html(
    renderer: &dyn Renderer,
    reference: &str,
    generated: &str,
    with_ground_truth: bool,
    backend: &dyn EmbeddingBackend,
) -> MetricReport {
    let cfg = fast_config();
    let r = renderer.render(reference, &cfg).await.unwrap();
    let g = renderer.render(generated, &cfg).await.unwrap();
    let pair = EvaluationPair {
        reference_screenshot: r.screenshot.clone(),
        reference_code: with_ground_truth.then(|| reference.to_string()),
        reference_blocks: with_ground_truth.then(|| (r.blocks.clone(), r.dims())),
        generated_code: generated.to_string(),
        generated_screenshot: g.screenshot.clone(),
        generated_blocks: g.blocks.clone(),
        generated_dims: g.dims(),
    };
    evaluate(&pair, TokenUsage::new(1, 2, 3), &MetricConfig::default(), backend).await
}

pub async fn self_evaluate(renderer: &dyn Renderer, html: &str) -> MetricReport {
    evaluate_html(renderer, html, html, true, &HistogramEmbedding).await
}

/// A report with everything that legitimately differs between equivalent
/// runs removed: ids, timestamps and latencies.
pub fn normalized_report(path: &Path) -> serde_json::Value {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                for key in ["run_id", "created_at", "updated_at", "timestamp", "latency_ms"] {
                    map.remove(key);
                }
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    strip(&mut v);
    v
}

pub mod oracles;

use std::path::{Path, PathBuf};
use std::process::Stdio;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::{Child, Command};
use tokio::sync::{mpsc, Semaphore};
use tokio::time::{timeout, Instant};

use super::blocks::{parse_blocks, EXTRACT_BLOCKS_JS};
use super::cdp::{CdpConnection, CdpError, CdpEvent};
use super::{
    RenderConfig, RenderError, RenderResult, Renderer, RequestAction, RequestRecord,
    LOAD_TIMEOUT_MS, PLACEHOLDER_PNG, UTILITY_CSS_RUNTIME,
};

const LOCAL_ORIGIN: &str = "http://uibench.local";
const RUNTIME_PATH: &str = "/__uibench/utility-css.js";

/// Locate a Chromium-family binary: `UIBENCH_CHROME`, then common names on
/// `PATH`, then a few well-known install locations.
pub fn find_chrome() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("UIBENCH_CHROME") {
        let p = PathBuf::from(p);
        if p.is_file() {
            return Some(p);
        }
    }
    let names = [
        "chromium",
        "chromium-browser",
        "google-chrome",
        "google-chrome-stable",
        "chrome",
        "headless_shell",
    ];
    if let Some(path) = std::env::var_os("PATH") {
        for dir in std::env::split_paths(&path) {
            for n in names {
                let c = dir.join(n);
                if c.is_file() {
                    return Some(c);
                }
            }
        }
    }
    [
        "/opt/chromium/chromium",
        "/opt/google/chrome/chrome",
        "/usr/lib/chromium/chromium",
    ]
    .into_iter()
    .map(PathBuf::from)
    .find(|p| p.is_file())
}

#[derive(Debug, Clone)]
pub struct ChromeOptions {
    pub executable: Option<PathBuf>,
    /// Number of pages rendering concurrently.
    pub pool_size: usize,
    /// Family used for every generic font name.
    pub default_font: String,
    pub monospace_font: String,
}

impl Default for ChromeOptions {
    fn default() -> Self {
        Self {
            executable: None,
            pool_size: 2,
            default_font: "DejaVu Sans".into(),
            monospace_font: "DejaVu Sans Mono".into(),
        }
    }
}

struct Browser {
    conn: CdpConnection,
    child: Mutex<Option<Child>>,
    _profile: tempfile::TempDir,
}

impl Drop for Browser {
    fn drop(&mut self) {
        if let Some(mut c) = self.child.lock().unwrap().take() {
            let _ = c.start_kill();
        }
    }
}

impl Browser {
    async fn launch(exe: &Path) -> Result<Self, RenderError> {
        let profile = tempfile::tempdir().map_err(|e| RenderError::BrowserUnavailable(e.to_string()))?;
        let mut cmd = Command::new(exe);
        // Take the browser down with us even when we die without unwinding.
        #[cfg(target_os = "linux")]
        unsafe {
            cmd.pre_exec(|| {
                if libc::prctl(libc::PR_SET_PDEATHSIG, libc::SIGKILL) == -1 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
        let mut child = cmd
            .args([
                "--headless=new",
                "--no-sandbox",
                "--disable-gpu",
                "--disable-dev-shm-usage",
                "--remote-debugging-port=0",
                "--no-first-run",
                "--no-default-browser-check",
                "--hide-scrollbars",
                "--mute-audio",
                "--force-color-profile=srgb",
                "--font-render-hinting=none",
                "--disable-lcd-text",
                "--disable-background-networking",
                "--disable-component-update",
                "--disable-default-apps",
                "--disable-extensions",
                "--disable-sync",
                "--disable-features=Translate,MediaRouter,OptimizationHints",
                "--metrics-recording-only",
                "--password-store=basic",
                "--use-mock-keychain",
            ])
            .arg(format!("--user-data-dir={}", profile.path().display()))
            .arg("about:blank")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .kill_on_drop(true)
            .spawn()
            .map_err(|e| RenderError::BrowserUnavailable(format!("{}: {e}", exe.display())))?;

        let stderr = child.stderr.take().expect("piped stderr");
        let mut lines = BufReader::new(stderr).lines();
        let ws_url = timeout(Duration::from_secs(30), async {
            while let Ok(Some(line)) = lines.next_line().await {
                if let Some(idx) = line.find("ws://") {
                    return Some(line[idx..].trim().to_string());
                }
            }
            None
        })
        .await
        .ok()
        .flatten()
        .ok_or_else(|| RenderError::BrowserUnavailable("no DevTools endpoint announced".into()))?;
        // Keep draining so the browser never blocks on a full pipe.
        tokio::spawn(async move { while let Ok(Some(_)) = lines.next_line().await {} });

        let conn = CdpConnection::connect(&ws_url)
            .await
            .map_err(|e| RenderError::BrowserUnavailable(e.to_string()))?;
        Ok(Self {
            conn,
            child: Mutex::new(Some(child)),
            _profile: profile,
        })
    }
}

struct Page {
    browser: Arc<Browser>,
    target_id: String,
    session_id: String,
    events: mpsc::UnboundedReceiver<CdpEvent>,
}

impl Page {
    async fn open(browser: Arc<Browser>, opts: &ChromeOptions) -> Result<Self, RenderError> {
        let conn = &browser.conn;
        let target = conn
            .call("Target.createTarget", json!({"url": "about:blank"}), None)
            .await
            .map_err(protocol)?;
        let target_id = target["targetId"].as_str().unwrap_or_default().to_string();
        let attach = conn
            .call(
                "Target.attachToTarget",
                json!({"targetId": target_id, "flatten": true}),
                None,
            )
            .await
            .map_err(protocol)?;
        let session_id = attach["sessionId"].as_str().unwrap_or_default().to_string();
        let events = conn.subscribe(&session_id);
        let page = Page {
            browser: browser.clone(),
            target_id,
            session_id,
            events,
        };
        page.call("Page.enable", json!({})).await?;
        page.call("Runtime.enable", json!({})).await?;
        page.call("Inspector.enable", json!({})).await?;
        page.call(
            "Fetch.enable",
            json!({"patterns": [{"urlPattern": "*", "requestStage": "Request"}]}),
        )
        .await?;
        let f = &opts.default_font;
        page.call(
            "Page.setFontFamilies",
            json!({"fontFamilies": {
                "standard": f, "sansSerif": f, "serif": f, "cursive": f, "fantasy": f,
                "fixed": opts.monospace_font,
            }}),
        )
        .await?;
        Ok(page)
    }

    async fn call(&self, method: &str, params: Value) -> Result<Value, RenderError> {
        self.browser
            .conn
            .call(method, params, Some(&self.session_id))
            .await
            .map_err(protocol)
    }

    async fn close(self) {
        self.browser.conn.unsubscribe(&self.session_id);
        let _ = self
            .browser
            .conn
            .call("Target.closeTarget", json!({"targetId": self.target_id}), None)
            .await;
    }
}

fn protocol(e: CdpError) -> RenderError {
    match e {
        CdpError::Closed => RenderError::BrowserCrash("devtools connection closed".into()),
        other => RenderError::Protocol(other.to_string()),
    }
}

/// Headless Chromium renderer with a fixed-size page pool.
pub struct ChromeRenderer {
    opts: ChromeOptions,
    executable: PathBuf,
    browser: tokio::sync::Mutex<Option<Arc<Browser>>>,
    idle: Mutex<Vec<Page>>,
    slots: Semaphore,
}

impl ChromeRenderer {
    /// Resolve the browser binary; the browser itself starts lazily.
    pub fn new(opts: ChromeOptions) -> Result<Self, RenderError> {
        let executable = opts
            .executable
            .clone()
            .or_else(find_chrome)
            .ok_or_else(|| {
                RenderError::BrowserUnavailable(
                    "no Chromium binary found; set UIBENCH_CHROME".into(),
                )
            })?;
        Ok(Self {
            slots: Semaphore::new(opts.pool_size.max(1)),
            opts,
            executable,
            browser: tokio::sync::Mutex::new(None),
            idle: Mutex::new(Vec::new()),
        })
    }

    async fn live_browser(&self) -> Result<Arc<Browser>, RenderError> {
        let mut guard = self.browser.lock().await;
        if let Some(b) = guard.as_ref() {
            if !b.conn.is_closed() {
                return Ok(b.clone());
            }
            tracing::warn!("browser connection lost, relaunching");
            self.idle.lock().unwrap().clear();
        }
        let b = Arc::new(Browser::launch(&self.executable).await?);
        *guard = Some(b.clone());
        Ok(b)
    }

    async fn checkout(&self) -> Result<Page, RenderError> {
        let browser = self.live_browser().await?;
        let reuse = {
            let mut idle = self.idle.lock().unwrap();
            idle.retain(|p| Arc::ptr_eq(&p.browser, &browser));
            idle.pop()
        };
        match reuse {
            Some(p) => Ok(p),
            None => Page::open(browser, &self.opts).await,
        }
    }

    async fn render_once(&self, html: &str, cfg: &RenderConfig) -> Result<RenderResult, RenderError> {
        let mut page = self.checkout().await?;
        match render_on_page(&mut page, html, cfg).await {
            Ok(r) => {
                self.idle.lock().unwrap().push(page);
                Ok(r)
            }
            Err(e) => {
                page.close().await;
                Err(e)
            }
        }
    }
}

#[async_trait]
impl Renderer for ChromeRenderer {
    async fn render(&self, html: &str, cfg: &RenderConfig) -> Result<RenderResult, RenderError> {
        if html.trim().is_empty() {
            return Err(RenderError::Invalid("empty document".into()));
        }
        cfg.validate().map_err(RenderError::Invalid)?;
        let _slot = self.slots.acquire().await.expect("semaphore never closed");
        match self.render_once(html, cfg).await {
            Err(RenderError::BrowserCrash(msg)) => {
                tracing::warn!(%msg, "render crashed, retrying once");
                self.render_once(html, cfg).await
            }
            other => other,
        }
    }
}

/// Put the runtime first in `<head>` (or at the very start when the
/// document has no head) so it is active before any content parses.
fn inject_runtime(html: &str) -> String {
    let tag = format!("<script src=\"{LOCAL_ORIGIN}{RUNTIME_PATH}\"></script>");
    let lower = html.to_ascii_lowercase();
    if let Some(i) = lower.find("<head") {
        if let Some(close) = lower[i..].find('>') {
            let at = i + close + 1;
            return format!("{}{}{}", &html[..at], tag, &html[at..]);
        }
    }
    if let Some(i) = lower.find("<html") {
        if let Some(close) = lower[i..].find('>') {
            let at = i + close + 1;
            return format!("{}<head>{}</head>{}", &html[..at], tag, &html[at..]);
        }
    }
    format!("{tag}{html}")
}

fn b64(data: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(data)
}

fn host_of(url: &str) -> &str {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    rest.split(['/', '?', '#']).next().unwrap_or("")
}

async fn answer_request(
    page: &Page,
    params: &Value,
    doc_url: &str,
    doc: &str,
    log: &mut Vec<RequestRecord>,
) -> Result<(), RenderError> {
    let request_id = params["requestId"].as_str().unwrap_or_default();
    let url = params["request"]["url"].as_str().unwrap_or_default().to_string();
    let resource_type = params["resourceType"].as_str().unwrap_or_default().to_string();
    let local = host_of(&url) == host_of(LOCAL_ORIGIN);
    let path = url.strip_prefix(LOCAL_ORIGIN).unwrap_or("");

    let fulfill = |status: u16, content_type: &str, body: &[u8]| {
        json!({
            "requestId": request_id,
            "responseCode": status,
            "responseHeaders": [
                {"name": "Content-Type", "value": content_type},
                {"name": "Cache-Control", "value": "no-store"},
            ],
            "body": b64(body),
        })
    };

    let action = if url == doc_url {
        page.call("Fetch.fulfillRequest", fulfill(200, "text/html; charset=utf-8", doc.as_bytes()))
            .await?;
        RequestAction::ServedLocal
    } else if local && path == RUNTIME_PATH {
        page.call(
            "Fetch.fulfillRequest",
            fulfill(200, "application/javascript", UTILITY_CSS_RUNTIME.as_bytes()),
        )
        .await?;
        RequestAction::ServedLocal
    } else if resource_type == "Image" {
        page.call("Fetch.fulfillRequest", fulfill(200, "image/png", PLACEHOLDER_PNG))
            .await?;
        RequestAction::Placeholder
    } else if local {
        page.call("Fetch.fulfillRequest", fulfill(404, "text/plain", b"not found"))
            .await?;
        RequestAction::NotFound
    } else {
        page.call(
            "Fetch.failRequest",
            json!({"requestId": request_id, "errorReason": "BlockedByClient"}),
        )
        .await?;
        RequestAction::Blocked
    };
    log.push(RequestRecord {
        url,
        resource_type,
        action,
    });
    Ok(())
}

struct EventState<'a> {
    doc_url: &'a str,
    doc: &'a str,
    requests: Vec<RequestRecord>,
    console_errors: Vec<String>,
    loaded: bool,
}

async fn handle_event(page: &Page, ev: CdpEvent, st: &mut EventState<'_>) -> Result<(), RenderError> {
    match ev.method.as_str() {
        "Fetch.requestPaused" => {
            answer_request(page, &ev.params, st.doc_url, st.doc, &mut st.requests).await?
        }
        "Page.loadEventFired" => st.loaded = true,
        "Inspector.targetCrashed" => {
            return Err(RenderError::BrowserCrash("page process crashed".into()))
        }
        "Runtime.exceptionThrown" => {
            let d = &ev.params["exceptionDetails"];
            let msg = d["exception"]["description"]
                .as_str()
                .or_else(|| d["text"].as_str())
                .unwrap_or("uncaught exception");
            st.console_errors.push(msg.to_string());
        }
        "Runtime.consoleAPICalled" if ev.params["type"] == "error" => {
            let msg = ev.params["args"]
                .as_array()
                .map(|args| {
                    args.iter()
                        .map(|a| {
                            a["value"]
                                .as_str()
                                .map(str::to_string)
                                .or_else(|| a["description"].as_str().map(str::to_string))
                                .unwrap_or_default()
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .unwrap_or_default();
            st.console_errors.push(msg);
        }
        _ => {}
    }
    Ok(())
}

async fn pump_until(
    page: &mut Page,
    st: &mut EventState<'_>,
    deadline: Instant,
    stop_on_load: bool,
) -> Result<bool, RenderError> {
    loop {
        if stop_on_load && st.loaded {
            return Ok(true);
        }
        let ev = match tokio::time::timeout_at(deadline, page.events.recv()).await {
            Err(_) => return Ok(false),
            Ok(None) => return Err(RenderError::BrowserCrash("event stream closed".into())),
            Ok(Some(ev)) => ev,
        };
        handle_event(page, ev, st).await?;
    }
}

async fn render_on_page(
    page: &mut Page,
    html: &str,
    cfg: &RenderConfig,
) -> Result<RenderResult, RenderError> {
    while page.events.try_recv().is_ok() {}

    page.call(
        "Emulation.setDeviceMetricsOverride",
        json!({
            "width": cfg.viewport_width,
            "height": cfg.viewport_height,
            "deviceScaleFactor": cfg.device_scale,
            "mobile": false,
        }),
    )
    .await?;

    // Named after the content so artifacts do not depend on render order.
    let digest = hex::encode(&Sha256::digest(html.as_bytes())[..8]);
    let doc_url = format!("{LOCAL_ORIGIN}/doc-{digest}/index.html");
    let doc = inject_runtime(html);
    let mut st = EventState {
        doc_url: &doc_url,
        doc: &doc,
        requests: Vec::new(),
        console_errors: Vec::new(),
        loaded: false,
    };

    // Page.navigate only returns once the document request is answered, so
    // events are pumped while it is in flight.
    let conn = page.browser.conn.clone();
    let session = page.session_id.clone();
    let nav_url = doc_url.clone();
    let mut nav = tokio::spawn(async move {
        conn.call("Page.navigate", json!({"url": nav_url}), Some(&session)).await
    });
    let deadline = Instant::now() + Duration::from_millis(LOAD_TIMEOUT_MS);
    let mut nav_done = false;
    while !(nav_done && st.loaded) {
        tokio::select! {
            res = &mut nav, if !nav_done => {
                nav_done = true;
                let v = res
                    .map_err(|e| RenderError::Protocol(e.to_string()))?
                    .map_err(protocol)?;
                if let Some(err) = v.get("errorText").and_then(Value::as_str) {
                    return Err(RenderError::Protocol(format!("navigation failed: {err}")));
                }
            }
            ev = tokio::time::timeout_at(deadline, page.events.recv()) => {
                match ev {
                    Err(_) => {
                        nav.abort();
                        return Err(RenderError::RenderTimeout(LOAD_TIMEOUT_MS));
                    }
                    Ok(None) => return Err(RenderError::BrowserCrash("event stream closed".into())),
                    Ok(Some(ev)) => handle_event(page, ev, &mut st).await?,
                }
            }
        }
    }

    // Settle: keep answering late requests while styles and fonts apply.
    let settle_deadline = Instant::now() + Duration::from_millis(cfg.settle_ms);
    pump_until(page, &mut st, settle_deadline, false).await?;
    let ready = page.call(
        "Runtime.evaluate",
        json!({
            "expression": "document.fonts.ready.then(() => new Promise(r => requestAnimationFrame(() => requestAnimationFrame(() => r(true)))))",
            "awaitPromise": true,
            "returnByValue": true,
        }),
    );
    let ready = timeout(Duration::from_millis(LOAD_TIMEOUT_MS), ready)
        .await
        .map_err(|_| RenderError::RenderTimeout(LOAD_TIMEOUT_MS))?;
    ready?;
    while let Ok(ev) = page.events.try_recv() {
        handle_event(page, ev, &mut st).await?;
    }

    let metrics = page.call("Page.getLayoutMetrics", json!({})).await?;
    let content_h = metrics["cssContentSize"]["height"].as_f64().unwrap_or(0.0);
    let page_height = if cfg.full_page {
        (content_h.ceil() as u32).max(cfg.viewport_height)
    } else {
        cfg.viewport_height
    };

    let shot = page
        .call(
            "Page.captureScreenshot",
            json!({
                "format": "png",
                "captureBeyondViewport": cfg.full_page,
                "fromSurface": true,
                "optimizeForSpeed": true,
                "clip": {
                    "x": 0, "y": 0,
                    "width": cfg.viewport_width,
                    "height": page_height,
                    "scale": 1,
                },
            }),
        )
        .await?;
    let screenshot = base64::engine::general_purpose::STANDARD
        .decode(shot["data"].as_str().unwrap_or_default())
        .map_err(|e| RenderError::Protocol(format!("screenshot payload: {e}")))?;

    let eval = page
        .call(
            "Runtime.evaluate",
            json!({"expression": EXTRACT_BLOCKS_JS, "returnByValue": true}),
        )
        .await?;
    if let Some(ex) = eval.get("exceptionDetails") {
        return Err(RenderError::Protocol(format!("block extraction failed: {ex}")));
    }
    let blocks = parse_blocks(&eval["result"]["value"]).map_err(RenderError::Protocol)?;

    while let Ok(ev) = page.events.try_recv() {
        handle_event(page, ev, &mut st).await?;
    }

    Ok(RenderResult {
        screenshot,
        page_width: cfg.viewport_width,
        page_height,
        console_errors: st.console_errors,
        blocks,
        requests: st.requests,
    })
}

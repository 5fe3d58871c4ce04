use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use futures::stream::{FuturesUnordered, StreamExt};
use serde::{Deserialize, Serialize};

use super::reference::ReferenceCache;
use super::store::{artifact, write_atomic, write_json, DATASET_FILE, CONFIG_FILE};
use super::{
    Counters, FailureInfo, InstanceStatus, MethodRef, ModelRef, RunConfig, RunError, RunPhase,
    RunRequest, RunState, RunStore, DEFAULT_RUN_CONCURRENCY,
};
use crate::dataset::{scan_dataset, Dataset, InputInstance};
use crate::llm::{CallLog, LlmGateway, ModelSpec};
use crate::method::{MethodContext, MethodRegistry, MethodSpec};
use crate::metrics::{evaluate, EvaluationPair};
use crate::render::{RenderError, Renderer};
use crate::report::build_report;

/// Simulated crashes for recovery testing: stop the executor right after
/// the given number of state checkpoints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultPlan {
    pub kill_after_checkpoints: Option<usize>,
    /// Abort the whole process instead of returning [`RunError::Killed`].
    pub hard_abort: bool,
}

/// Result of `execute`/`resume`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub state: RunState,
    /// The run was already complete, so nothing was executed.
    pub already_complete: bool,
}

/// Point-in-time view of a run for status polling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    #[serde(flatten)]
    pub state: RunState,
    pub terminal: bool,
    /// An executor currently holds the run.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub created_at: DateTime<Utc>,
    pub model: String,
    pub method: String,
    pub dataset_root: PathBuf,
    pub phase: RunPhase,
    pub counters: Counters,
    pub active: bool,
}

struct Inner {
    store: RunStore,
    gateway: Arc<LlmGateway>,
    methods: MethodRegistry,
    renderer: Arc<dyn Renderer>,
    faults: FaultPlan,
}

/// Creates and executes runs. Cheap to clone; clones share everything.
#[derive(Clone)]
pub struct Engine {
    inner: Arc<Inner>,
}

/// Serializes state mutations and their checkpoints.
struct Checkpointer<'a> {
    store: &'a RunStore,
    state: Mutex<RunState>,
    count: AtomicUsize,
    killed: AtomicBool,
    faults: FaultPlan,
}

impl Checkpointer<'_> {
    fn advance(
        &self,
        id: &str,
        to: InstanceStatus,
        failure: Option<FailureInfo>,
    ) -> Result<(), RunError> {
        let mut state = self.state.lock().unwrap();
        if self.killed.load(Ordering::SeqCst) {
            return Err(RunError::Killed);
        }
        state.advance(id, to, failure)?;
        self.store.write_state(&state)?;
        let n = self.count.fetch_add(1, Ordering::SeqCst) + 1;
        if self.faults.kill_after_checkpoints == Some(n) {
            if self.faults.hard_abort {
                std::process::abort();
            }
            self.killed.store(true, Ordering::SeqCst);
            return Err(RunError::Killed);
        }
        Ok(())
    }

    fn check_alive(&self) -> Result<(), RunError> {
        if self.killed.load(Ordering::SeqCst) {
            Err(RunError::Killed)
        } else {
            Ok(())
        }
    }
}

fn failure(code: &str, stage: Option<&str>, message: impl Into<String>) -> FailureInfo {
    FailureInfo {
        code: code.to_string(),
        stage: stage.map(str::to_string),
        message: message.into(),
    }
}

impl Engine {
    pub fn new(
        store: RunStore,
        gateway: Arc<LlmGateway>,
        methods: MethodRegistry,
        renderer: Arc<dyn Renderer>,
    ) -> Self {
        Self {
            inner: Arc::new(Inner {
                store,
                gateway,
                methods,
                renderer,
                faults: FaultPlan::default(),
            }),
        }
    }

    /// A copy of this engine that injects the given faults.
    pub fn with_faults(&self, faults: FaultPlan) -> Self {
        Self {
            inner: Arc::new(Inner {
                store: self.inner.store.clone(),
                gateway: self.inner.gateway.clone(),
                methods: self.inner.methods.clone(),
                renderer: self.inner.renderer.clone(),
                faults,
            }),
        }
    }

    pub fn store(&self) -> &RunStore {
        &self.inner.store
    }

    pub fn gateway(&self) -> &LlmGateway {
        &self.inner.gateway
    }

    pub fn methods(&self) -> &MethodRegistry {
        &self.inner.methods
    }

    pub fn renderer(&self) -> &dyn Renderer {
        self.inner.renderer.as_ref()
    }

    fn resolve(&self, req: &RunRequest) -> Result<(ModelSpec, MethodSpec), RunError> {
        let model = match &req.model {
            ModelRef::Label(s) => ModelSpec::parse(s),
            ModelRef::Spec(m) => Ok(m.clone()),
        }
        .and_then(|m| m.validate().map(|_| m))
        .map_err(|e| RunError::ConfigError(e.to_string()))?;
        if !self.inner.gateway.has_provider(&model.provider) {
            return Err(RunError::ConfigError(format!(
                "provider {:?} is not registered",
                model.provider
            )));
        }
        let method = match &req.method {
            MethodRef::Name(n) => MethodSpec::named(n.clone()),
            MethodRef::Spec(s) => s.clone(),
        };
        let method = self
            .inner
            .methods
            .resolve(&method)
            .map_err(|e| RunError::ConfigError(e.to_string()))?;
        Ok((model, method))
    }

    /// Validate a request, then write `config.json`, `dataset.json` and an
    /// all-pending `state.json` into a new run directory.
    pub fn create_run(&self, req: RunRequest) -> Result<RunConfig, RunError> {
        let (model, method) = self.resolve(&req)?;
        let render_config = req.render_config.clone().unwrap_or_default();
        render_config.validate().map_err(RunError::ConfigError)?;
        let metric_config = req.metric_config.clone().unwrap_or_default();
        if !(0.0..=1.0).contains(&metric_config.match_threshold) {
            return Err(RunError::ConfigError("match_threshold must lie in [0, 1]".into()));
        }
        let retry_policy = req.retry_policy.clone().unwrap_or_default();
        if retry_policy.max_attempts == 0 {
            return Err(RunError::ConfigError("retry_policy.max_attempts must be ≥ 1".into()));
        }
        let concurrency = req.concurrency.unwrap_or(DEFAULT_RUN_CONCURRENCY);
        if concurrency == 0 {
            return Err(RunError::ConfigError("concurrency must be ≥ 1".into()));
        }
        let dataset = scan_dataset(&req.dataset_root)?;
        let dataset_root = req
            .dataset_root
            .canonicalize()
            .unwrap_or_else(|_| req.dataset_root.clone());

        let store = &self.inner.store;
        let (run_id, dir) = loop {
            let id = ulid::Ulid::new().to_string();
            match store.create_run_dir(&id) {
                Ok(dir) => break (id, dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        };
        let config = RunConfig {
            run_id: run_id.clone(),
            dataset_root,
            model,
            method,
            render_config,
            metric_config,
            retry_policy,
            concurrency,
            created_at: Utc::now(),
        };
        write_json(&dir.join(DATASET_FILE), &dataset.manifest())?;
        let state = RunState::new(&run_id, dataset.instances.iter().map(|i| i.id.as_str()));
        store.write_state(&state)?;
        // config.json last: its presence is what makes the run visible.
        write_json(&dir.join(CONFIG_FILE), &config)?;
        Ok(config)
    }

    pub fn status(&self, run_id: &str) -> Result<RunSnapshot, RunError> {
        let state = self.inner.store.read_state(run_id)?;
        Ok(RunSnapshot {
            terminal: state.phase == RunPhase::Completed,
            active: self.inner.store.is_active(run_id),
            state,
        })
    }

    /// Every run, newest first.
    pub fn list_runs(&self) -> Result<Vec<RunSummary>, RunError> {
        let store = &self.inner.store;
        let mut out = Vec::new();
        for id in store.list_run_ids()? {
            let (Ok(cfg), Ok(state)) = (store.read_config(&id), store.read_state(&id)) else {
                continue;
            };
            out.push(RunSummary {
                active: store.is_active(&id),
                run_id: id,
                created_at: cfg.created_at,
                model: cfg.model.label(),
                method: cfg.method.name,
                dataset_root: cfg.dataset_root,
                phase: state.phase,
                counters: state.counters,
            });
        }
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.run_id.cmp(&a.run_id)));
        Ok(out)
    }

    pub async fn execute(&self, run_id: &str) -> Result<RunOutcome, RunError> {
        self.drive(run_id, false).await
    }

    /// Continue an interrupted run. In-flight instances restart from
    /// scratch; failed ones only with `retry_failed`.
    pub async fn resume(&self, run_id: &str, retry_failed: bool) -> Result<RunOutcome, RunError> {
        self.drive(run_id, retry_failed).await
    }

    async fn drive(&self, run_id: &str, retry_failed: bool) -> Result<RunOutcome, RunError> {
        let store = &self.inner.store;
        let _lock = store.lock(run_id)?;
        let config = store.read_config(run_id)?;
        let mut state = store.read_state(run_id)?;
        let report_exists = store.report_path(run_id).is_file();
        let has_failed = state.counters.failed > 0;
        if state.all_terminal() && report_exists && !(retry_failed && has_failed) {
            if state.phase != RunPhase::Completed {
                state.phase = RunPhase::Completed;
                store.write_state(&state)?;
            }
            return Ok(RunOutcome {
                state,
                already_complete: true,
            });
        }

        let dataset = self.load_dataset(run_id, &config)?;
        let reset = state.reset_for_resume(retry_failed);
        if !reset.is_empty() {
            tracing::info!(run_id, ?reset, "restarting instances");
        }
        state.phase = RunPhase::Running;
        store.write_state(&state)?;

        let pending: Vec<&InputInstance> = state
            .pending_ids()
            .iter()
            .filter_map(|id| dataset.get(id))
            .collect();
        let cp = Checkpointer {
            store,
            state: Mutex::new(state),
            count: AtomicUsize::new(0),
            killed: AtomicBool::new(false),
            faults: self.inner.faults,
        };
        let cache = ReferenceCache::new(store.reference_cache_dir());

        let mut queue = pending.into_iter();
        let mut running = FuturesUnordered::new();
        loop {
            while running.len() < config.concurrency.max(1) {
                match queue.next() {
                    Some(inst) => running.push(self.process(&config, inst, &cp, &cache)),
                    None => break,
                }
            }
            match running.next().await {
                Some(res) => res?,
                None => break,
            }
        }
        drop(running);

        let report = build_report(store, run_id)?;
        write_json(&store.report_path(run_id), &report)?;
        let mut state = cp.state.into_inner().unwrap();
        state.phase = RunPhase::Completed;
        state.updated_at = Utc::now();
        store.write_state(&state)?;
        Ok(RunOutcome {
            state,
            already_complete: false,
        })
    }

    fn load_dataset(&self, run_id: &str, config: &RunConfig) -> Result<Dataset, RunError> {
        let manifest = self.inner.store.read_manifest(run_id)?;
        let dataset = scan_dataset(&config.dataset_root)?;
        for entry in &manifest.instances {
            match dataset.get(&entry.id) {
                Some(i) if i.has_ground_truth() == entry.has_ground_truth => {}
                _ => {
                    return Err(RunError::ConfigError(format!(
                        "dataset at {} no longer matches the run manifest (instance {})",
                        config.dataset_root.display(),
                        entry.id
                    )))
                }
            }
        }
        Ok(dataset)
    }

    /// Take one instance from pending to a terminal state. Only fatal
    /// conditions surface as errors; everything else fails the instance.
    async fn process(
        &self,
        config: &RunConfig,
        inst: &InputInstance,
        cp: &Checkpointer<'_>,
        cache: &ReferenceCache,
    ) -> Result<(), RunError> {
        let id = inst.id.as_str();
        let fail = |f: FailureInfo| {
            tracing::warn!(instance = id, code = %f.code, message = %f.message, "instance failed");
            cp.advance(id, InstanceStatus::Failed, Some(f))
        };
        cp.advance(id, InstanceStatus::Generating, None)?;

        let dir = self.inner.store.instance_dir(&config.run_id, id);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let screenshot = match inst.read_screenshot() {
            Ok(b) => b,
            Err(e) => return fail(failure("UnreadableImage", Some("load"), e.to_string())),
        };
        let log = CallLog::create(dir.join(artifact::CALL_LOG))?;
        let embedding = config.metric_config.embedding.build();
        let ctx = MethodContext {
            gateway: &self.inner.gateway,
            model: &config.model,
            retry: &config.retry_policy,
            instance: inst,
            screenshot: &screenshot,
            call_log: &log,
            renderer: self.inner.renderer.as_ref(),
            render_config: &config.render_config,
            embedding: embedding.as_ref(),
        };
        let mut generation = match self.inner.methods.run_method(&config.method, &ctx).await {
            Ok(a) => a,
            Err(e) => return fail(failure(e.code(), e.stage(), e.to_string())),
        };
        cp.check_alive()?;
        generation.call_log_ref = Some(PathBuf::from(artifact::CALL_LOG));
        write_atomic(&dir.join(artifact::GENERATED_HTML), generation.generated_code.as_bytes())?;
        write_json(&dir.join(artifact::GENERATION), &generation)?;

        cp.advance(id, InstanceStatus::Rendering, None)?;
        let renderer = self.inner.renderer.as_ref();
        let generated = match renderer
            .render(&generation.generated_code, &config.render_config)
            .await
        {
            Ok(r) => r,
            Err(RenderError::BrowserUnavailable(m)) => return Err(RunError::Environment(m)),
            Err(e) => return fail(failure(e.code(), Some("render"), e.to_string())),
        };
        cp.check_alive()?;
        write_atomic(&dir.join(artifact::GENERATED_PNG), &generated.screenshot)?;
        write_json(&dir.join(artifact::BLOCKS_GEN), &generated)?;

        let reference = match &inst.ground_truth_code {
            Some(code) => {
                match cache.get_or_render(code, &config.render_config, renderer).await? {
                    Ok(r) => Some((code.clone(), r)),
                    Err(RenderError::BrowserUnavailable(m)) => {
                        return Err(RunError::Environment(m))
                    }
                    Err(e) => {
                        return fail(failure(e.code(), Some("render_reference"), e.to_string()))
                    }
                }
            }
            None => None,
        };
        cp.check_alive()?;
        if let Some((_, r)) = &reference {
            write_atomic(&dir.join(artifact::REFERENCE_PNG), &r.screenshot)?;
            write_json(&dir.join(artifact::BLOCKS_REF), r)?;
        }

        cp.advance(id, InstanceStatus::Evaluating, None)?;
        let (reference_code, reference_blocks) = match reference {
            Some((code, r)) => {
                let dims = r.dims();
                (Some(code), Some((r.blocks, dims)))
            }
            None => (None, None),
        };
        let pair = EvaluationPair {
            reference_screenshot: screenshot,
            reference_code,
            reference_blocks,
            generated_dims: generated.dims(),
            generated_code: generation.generated_code,
            generated_screenshot: generated.screenshot,
            generated_blocks: generated.blocks,
        };
        let report = evaluate(
            &pair,
            generation.usage_total,
            &config.metric_config,
            embedding.as_ref(),
        )
        .await;
        cp.check_alive()?;
        write_json(&dir.join(artifact::METRICS), &report)?;
        cp.advance(id, InstanceStatus::Done, None)
    }
}

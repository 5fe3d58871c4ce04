use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use uibench_core::llm::LlmGateway;
use uibench_core::method::{parse_param, MethodRegistry, MethodSpec, ParamMap};
use uibench_core::metrics::{EmbeddingConfig, MetricConfig, MetricName};
use uibench_core::render::{ChromeOptions, ChromeRenderer, RenderConfig, Renderer, UnavailableRenderer};
use uibench_core::report::{build_leaderboard, load_report};
use uibench_core::run::{Engine, FaultPlan, MethodRef, ModelRef, RunRequest, RunStore};

use crate::error::ApiError;

/// Environment variable that makes the executor abort the process after the
/// given number of state checkpoints. Used by crash-recovery tests.
pub const FAULT_ENV: &str = "UIBENCH_FAULT_KILL_AFTER";

#[derive(Debug, Parser)]
#[command(name = "uibench", version, about = "Evaluate screenshot-to-HTML generation methods")]
pub struct Cli {
    /// Directory holding runs, caches and uploads.
    #[arg(long, env = "UIBENCH_DATA_DIR", default_value = "uibench-data", global = true)]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a run, execute it to completion and print the report path.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// `provider:model_id`, e.g. `mock:echo`.
        #[arg(long)]
        model: String,
        #[arg(long)]
        method: String,
        /// Method parameter, repeatable.
        #[arg(long = "method-param", value_name = "KEY=VALUE")]
        method_params: Vec<String>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        match_threshold: Option<f64>,
        /// Use an embedding service instead of the builtin histogram backend.
        #[arg(long, value_name = "URL")]
        clip_url: Option<String>,
        #[arg(long)]
        settle_ms: Option<u64>,
    },
    /// Print a run's state.
    Status { run_id: String },
    /// Continue an interrupted run.
    Resume {
        run_id: String,
        /// Also re-run instances that failed.
        #[arg(long)]
        retry_failed: bool,
    },
    /// Print a finished run's report.
    Report {
        run_id: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Rank finished runs by one metric.
    Leaderboard {
        #[arg(required = true)]
        run_ids: Vec<String>,
        #[arg(long, default_value = "visual_similarity")]
        sort: String,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Serve the REST API (and optionally a static UI bundle).
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

/// Engine over `data_dir`. Without a browser, commands that render fail
/// with `EnvironmentError`; the rest still work.
pub fn build_engine(data_dir: PathBuf) -> Engine {
    let renderer: Arc<dyn Renderer> = match ChromeRenderer::new(ChromeOptions::default()) {
        Ok(r) => Arc::new(r),
        Err(e) => Arc::new(UnavailableRenderer(e.to_string())),
    };
    let engine = Engine::new(
        RunStore::new(data_dir),
        Arc::new(LlmGateway::with_default_providers()),
        MethodRegistry::with_builtin(),
        renderer,
    );
    let faults = std::env::var(FAULT_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .map(|n| FaultPlan {
            kill_after_checkpoints: Some(n),
            hard_abort: true,
        });
    match faults {
        Some(f) => engine.with_faults(f),
        None => engine,
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

/// Run one command; the returned error carries the exit code.
pub async fn execute(cli: Cli) -> Result<(), ApiError> {
    let engine = build_engine(cli.data_dir);
    match cli.command {
        Command::Run {
            dataset,
            model,
            method,
            method_params,
            concurrency,
            match_threshold,
            clip_url,
            settle_ms,
        } => {
            let mut params = ParamMap::new();
            for kv in &method_params {
                let (k, v) = parse_param(kv).map_err(|e| ApiError::new("ConfigError", e.to_string()))?;
                params.insert(k, v);
            }
            let mut metric_config = MetricConfig::default();
            if let Some(t) = match_threshold {
                metric_config.match_threshold = t;
            }
            if let Some(url) = clip_url {
                metric_config.embedding = EmbeddingConfig::ClipService { url };
            }
            let render_config = settle_ms.map(|s| RenderConfig {
                settle_ms: s,
                ..RenderConfig::default()
            });
            let req = RunRequest {
                dataset_root: dataset,
                model: ModelRef::Label(model),
                method: MethodRef::Spec(MethodSpec {
                    name: method,
                    params,
                    description: String::new(),
                }),
                render_config,
                metric_config: Some(metric_config),
                retry_policy: None,
                concurrency,
            };
            let config = engine.create_run(req)?;
            eprintln!("run {} created", config.run_id);
            let out = engine.execute(&config.run_id).await?;
            eprintln!(
                "run {}: {} done, {} failed",
                config.run_id, out.state.counters.done, out.state.counters.failed
            );
            println!("{}", engine.store().report_path(&config.run_id).display());
        }
        Command::Status { run_id } => print_json(&engine.status(&run_id)?),
        Command::Resume {
            run_id,
            retry_failed,
        } => {
            let out = engine.resume(&run_id, retry_failed).await?;
            if out.already_complete {
                eprintln!("run {run_id} is already complete");
            }
            println!("{}", engine.store().report_path(&run_id).display());
        }
        Command::Report { run_id, format } => {
            let report = load_report(engine.store(), &run_id)?;
            match format {
                Format::Json => print_json(&report),
                Format::Md => print!("{}", report.to_markdown()),
            }
        }
        Command::Leaderboard {
            run_ids,
            sort,
            format,
        } => {
            let sort = MetricName::parse(&sort)
                .ok_or_else(|| ApiError::new("ConfigError", format!("unknown metric {sort:?}")))?;
            let lb = build_leaderboard(engine.store(), &run_ids, sort)?;
            match format {
                Format::Json => print_json(&lb),
                Format::Md => print!("{}", lb.to_markdown()),
            }
        }
        Command::Serve {
            port,
            bind,
            static_dir,
        } => {
            let app = crate::api::router(engine, static_dir);
            let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                .await
                .map_err(|e| ApiError::new("EnvironmentError", e.to_string()))?;
            eprintln!("listening on http://{}", listener.local_addr().unwrap());
            axum::serve(listener, app)
                .await
                .map_err(|e| ApiError::new("InternalError", e.to_string()))?;
        }
    }
    Ok(())
}

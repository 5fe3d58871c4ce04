mod common;

use common::*;
use uibench_core::llm::CallLog;
use uibench_core::report::RunReport;
use uibench_core::run::{artifact, InstanceStatus, RunError, RunRequest};

#[tokio::test]
async fn three_instances_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let renderer = chrome();
    let ds = tmp.path().join("ds");
    write_dataset(&ds, &PAGES[..3], renderer.as_ref(), true).await;
    let engine = engine(&tmp.path().join("data"), renderer);

    let mut req = RunRequest::new(&ds, "mock:echo", "direct");
    req.render_config = Some(fast_config());
    let cfg = engine.create_run(req).unwrap();
    let snap = engine.status(&cfg.run_id).unwrap();
    assert_eq!(snap.state.counters.pending, 3);

    let out = engine.execute(&cfg.run_id).await.unwrap();
    assert_eq!(out.state.counters.done, 3, "{:?}", out.state);
    let run_dir = engine.store().run_dir(&cfg.run_id);
    for id in ["p1", "p2", "p3"] {
        let d = run_dir.join("instances").join(id);
        for a in [
            artifact::GENERATED_HTML,
            artifact::GENERATED_PNG,
            artifact::REFERENCE_PNG,
            artifact::BLOCKS_REF,
            artifact::BLOCKS_GEN,
            artifact::CALL_LOG,
            artifact::METRICS,
        ] {
            assert!(d.join(a).is_file(), "{id}/{a}");
        }
        assert_eq!(CallLog::read_jsonl(&d.join(artifact::CALL_LOG)).unwrap().len(), 1);
    }
    let report: RunReport =
        serde_json::from_slice(&std::fs::read(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.done, 3);
    assert_eq!(report.tokens.calls, 3);

    let again = engine.resume(&cfg.run_id, false).await.unwrap();
    assert!(again.already_complete);
}

#[tokio::test]
async fn permanent_provider_failure_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let renderer = chrome();
    let ds = tmp.path().join("ds");
    write_dataset(&ds, &PAGES[..2], renderer.as_ref(), false).await;
    let engine = engine(&tmp.path().join("data"), renderer);
    let mut req = RunRequest::new(&ds, "mock:fail", "direct");
    req.render_config = Some(fast_config());
    let cfg = engine.create_run(req).unwrap();
    let out = engine.execute(&cfg.run_id).await.unwrap();
    assert_eq!(out.state.counters.failed, 2);
    let f = out.state.instances["p1"].failure.as_ref().unwrap();
    assert_eq!(f.code, "ProviderError");
    assert_eq!(out.state.instances["p1"].status, InstanceStatus::Failed);
}

#[tokio::test]
async fn config_errors_create_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let engine = engine(&data, chrome());
    let ds = tmp.path().join("ds");
    std::fs::create_dir_all(&ds).unwrap();
    let err = engine
        .create_run(RunRequest::new(&ds, "mock:echo", "latcoder-full"))
        .unwrap_err();
    assert!(matches!(err, RunError::ConfigError(_)), "{err}");
    assert!(!data.join("runs").exists());
    let err = engine.status("NOPE").unwrap_err();
    assert_eq!(err.code(), "RunNotFound");
}

//! End-to-end pipeline checks on one short meeting.

use wasn_core::config::{ArrayMode, InitMode, PipelineConfig, SyncMode};
use wasn_core::pipeline::{process_meeting, run, simulate_meeting};

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.seed = 7;
    cfg.simulate.duration_s = 25.0;
    cfg.simulate.num_meetings = 1;
    cfg.simulate.sto_max_s = 1.0;
    cfg.spatial.min_cluster_frames = 12;
    cfg
}

#[test]
fn estimated_pipeline_processes_a_meeting() {
    let cfg = small_config();
    let data = simulate_meeting(0, &cfg).unwrap();
    let outcome = process_meeting(&data, &cfg).unwrap();

    let der = outcome.der.unwrap();
    assert!(
        der.der_percent < 40.0,
        "implausible DER {}",
        der.der_percent
    );
    assert!(outcome.diary.max_concurrency() <= 2);
    assert_eq!(outcome.sync_reports.len(), 3);
    assert!(outcome.geometry.is_some());
    assert!(!outcome.enhanced.is_empty());
    assert!(outcome.mean_si_sdr_db.is_some());
    let metrics = &outcome.metrics;
    assert!(metrics.sto_error_ms.unwrap() < 20.0);
}

#[test]
fn oracle_variant_improves_or_matches_der() {
    let cfg = small_config();
    let data = simulate_meeting(0, &cfg).unwrap();

    let mut est_cfg = cfg.clone();
    est_cfg.skip_separation = true;
    let est = process_meeting(&data, &est_cfg).unwrap();

    let mut oracle_cfg = est_cfg.clone();
    oracle_cfg.sync = SyncMode::Oracle;
    let oracle = process_meeting(&data, &oracle_cfg).unwrap();

    // Oracle clocks and geometry should not be noticeably worse.
    assert!(
        oracle.der.unwrap().der_percent <= est.der.unwrap().der_percent + 5.0,
        "oracle {} vs estimated {}",
        oracle.der.unwrap().der_percent,
        est.der.unwrap().der_percent
    );
}

#[test]
fn single_array_variant_runs() {
    let mut cfg = small_config();
    cfg.arrays = ArrayMode::Single(0);
    cfg.skip_separation = true;
    let data = simulate_meeting(0, &cfg).unwrap();
    let outcome = process_meeting(&data, &cfg).unwrap();
    assert!(outcome.der.unwrap().der_percent <= 100.0);
}

#[test]
fn oracle_diary_init_runs_separation() {
    let mut cfg = small_config();
    cfg.sync = SyncMode::Oracle;
    cfg.init = InitMode::OracleDiary;
    let data = simulate_meeting(0, &cfg).unwrap();
    let outcome = process_meeting(&data, &cfg).unwrap();
    assert!(outcome.mean_si_sdr_db.is_some());
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let mut cfg = small_config();
    cfg.simulate.duration_s = 20.0;
    let dir1 = tempdir("run1");
    let dir2 = tempdir("run2");
    let summary1 = run(&cfg, &dir1).unwrap();
    let summary2 = run(&cfg, &dir2).unwrap();
    assert!(summary1.failures.is_empty(), "{:?}", summary1.failures);
    assert!(summary2.failures.is_empty());

    for file in ["metrics.csv", "summary.csv"] {
        let a = std::fs::read(dir1.join(file)).unwrap();
        let b = std::fs::read(dir2.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    for file in [
        "run_manifest.json",
        "meetings/meeting_000/manifest.json",
        "meetings/meeting_000/sync_report.jsonl",
        "meetings/meeting_000/geometry.json",
        "meetings/meeting_000/hypothesis.rttm",
        "meetings/meeting_000/reference.rttm",
        "meetings/meeting_000/enhanced_manifest.json",
    ] {
        assert!(dir1.join(file).exists(), "{file} missing");
    }
    std::fs::remove_dir_all(&dir1).ok();
    std::fs::remove_dir_all(&dir2).ok();
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("wasn-pipeline-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

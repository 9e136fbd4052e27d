use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use sharegraph::pipeline::{run_pipeline, AnalysisConfig, GraphOutFormat, RunConfig, Stage};
use sharegraph::trace::{Granularity, TraceFormat};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn golden_config(out: &Path) -> RunConfig {
    let analysis = AnalysisConfig {
        granularity: Granularity::Page,
        window_seconds: vec![120],
        thresholds: vec![1],
        baseline_trials: 20,
        seed: 1,
        ..AnalysisConfig::default()
    };
    RunConfig::new(data("synth-1000.csv"), TraceFormat::CanonicalCsv, analysis, out)
}

#[test]
fn golden_trace_report() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&golden_config(dir.path())).unwrap();

    for name in ["report.csv", "scatter.csv", "scatter.svg", "job-000.json", "manifest.json"] {
        assert!(dir.path().join(name).is_file(), "missing {name}");
    }
    let bytes = fs::read(data("synth-1000.csv")).unwrap();
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(summary.manifest.trace_sha256, digest);
    assert_eq!(summary.manifest.trace_bytes, bytes.len() as u64);
    assert_eq!(summary.manifest.ingest.records, 999);
    let manifest = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains(&digest));

    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let golden = fs::read_to_string(data("synth-1000.report.csv")).unwrap();
    assert_eq!(report, golden);
}

#[test]
fn job_json_carries_per_window_detail() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&golden_config(dir.path())).unwrap();
    let doc: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("job-000.json")).unwrap()).unwrap();
    let windows = doc["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 10);
    assert!(windows.iter().any(|w| w["window"]["partial"] == true));
    assert!(windows[0]["baseline"]["clustering_c"]["stddev"].is_number());
    assert!(windows[0]["ratios"]["c_ratio"].is_number());
    assert_eq!(doc["report"]["windows_analyzed"], summary.reports[0].windows_analyzed);
}

#[test]
fn graph_export_and_window_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = golden_config(&dir.path().join("out"));
    config.graph_out_format = Some(GraphOutFormat::Adjacency);
    config.dump_windows = Some(dir.path().join("windows"));
    run_pipeline(&config).unwrap();
    let graphs: Vec<_> = fs::read_dir(dir.path().join("out/graphs")).unwrap().collect();
    assert_eq!(graphs.len(), 10);
    let dumped = fs::read_to_string(dir.path().join("windows/T120-window-00000.csv")).unwrap();
    assert!(dumped.starts_with("timestamp,consumer,object,server\n"));
}

#[test]
fn job_log_and_proxy_log_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let job_log = dir.path().join("d0.csv");
    let mut text = String::from("timestamp,user,file\n");
    let proxy = dir.path().join("access.log");
    let mut squid = String::new();
    for day in 0..14u64 {
        for (u, f) in [("ann", "/raw/a"), ("bob", "/raw/a"), ("cy", "/raw/a"), ("ann", "/raw/b"), ("dee", "/raw/b")] {
            let ts = day * 86_400 + 60;
            text.push_str(&format!("{ts},{u},{f}\n"));
            squid.push_str(&format!(
                "{ts}.250 12 {u} TCP_MISS/200 512 GET http://host.example{f} - DIRECT/1.2.3.4 text/html\n"
            ));
        }
    }
    fs::write(&job_log, text).unwrap();
    fs::write(&proxy, squid).unwrap();

    let analysis = AnalysisConfig {
        granularity: Granularity::File,
        window_seconds: vec![7 * 86_400],
        baseline_trials: 5,
        ..AnalysisConfig::default()
    };
    let summary =
        run_pipeline(&RunConfig::new(&job_log, TraceFormat::JobLog, analysis.clone(), dir.path().join("a"))).unwrap();
    let r = &summary.reports[0];
    // The second week ends after the last access, so it is partial.
    assert_eq!((r.windows_analyzed, r.partial_windows_excluded), (1, 1));
    assert_eq!((r.avg_n, r.avg_links), (4.0, 4.0));

    let page = AnalysisConfig { granularity: Granularity::Page, ..analysis };
    let summary = run_pipeline(&RunConfig::new(&proxy, TraceFormat::ProxyLog, page, dir.path().join("b"))).unwrap();
    assert_eq!(summary.reports[0].avg_links, 4.0);
}

#[test]
fn failures_are_categorized() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = golden_config(dir.path());
    config.trace = dir.path().join("missing.csv");
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!((err.stage, err.exit_code()), (Stage::Ingest, 3));
    assert!(err.to_string().contains("ingest"));

    let mut config = golden_config(dir.path());
    config.analysis.window_seconds = vec![0];
    assert_eq!(run_pipeline(&config).unwrap_err().exit_code(), 2);

    let mut config = golden_config(dir.path());
    config.analysis.window_seconds = vec![100_000];
    let err = run_pipeline(&config).unwrap_err();
    assert_eq!((err.stage, err.exit_code()), (Stage::Aggregate, 4));
}

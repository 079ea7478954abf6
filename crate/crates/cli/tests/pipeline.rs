//! End-to-end pipeline checks: emitted files, manifest bookkeeping, and
//! failure reporting.

use std::path::{Path, PathBuf};

use flowmark_cli::pipeline::{run_pipeline, ErrorKind};

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write_options(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("options.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn run_emits_report_results_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let options = write_options(
        tmp.path(),
        r#"{"optimization": {"type": "copper_plate", "redispatch": {"include": true}}}"#,
    );
    let out = tmp.path().join("out");
    let manifest = run_pipeline(&fixtures_dir().join("two_node"), &options, &out).unwrap();

    assert!(manifest.success);
    assert!(manifest.error.is_none());
    let stages: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert!(stages.contains(&"load"));
    assert!(stages.contains(&"market"));
    assert!(stages.contains(&"redispatch"));
    for file in [
        "manifest.json",
        "report.txt",
        "report.json",
        "market/G.csv",
        "market/objective.json",
        "redispatch/redispatch.csv",
        "geo.json",
    ] {
        assert!(out.join(file).is_file(), "missing output {file}");
        assert!(
            manifest.outputs.iter().any(|o| o == file),
            "manifest does not list {file}"
        );
    }

    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("Number of N-0 Overloads (market): 1"));
    assert!(report.contains("Number of N-0 Overloads (redispatch): 0"));
    assert!(report.contains("Total Redispatch in MWh: 100"));
}

#[test]
fn rerun_reuses_the_reduction_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let options = write_options(
        tmp.path(),
        r#"{"optimization": {"type": "nodal", "contingency": {"enabled": true}}}"#,
    );
    let out = tmp.path().join("out");
    let data = fixtures_dir().join("three_node_ring");
    let first = run_pipeline(&data, &options, &out).unwrap();
    let second = run_pipeline(&data, &options, &out).unwrap();
    assert!(first.success && second.success);
    assert_eq!(first.options_hash, second.options_hash);
    let cached: Vec<_> = std::fs::read_dir(out.join("cache"))
        .unwrap()
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    assert_eq!(cached.len(), 1, "one cache entry for one fingerprint");
}

#[test]
fn missing_table_fails_with_data_kind_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("broken");
    // Copy the fixture, then delete a required table.
    let src = fixtures_dir().join("two_node");
    std::fs::create_dir_all(&data).unwrap();
    for entry in std::fs::read_dir(&src).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), data.join(entry.file_name())).unwrap();
    }
    std::fs::remove_file(data.join("plants.csv")).unwrap();

    let options = write_options(tmp.path(), r#"{"optimization": {"type": "copper_plate"}}"#);
    let out = tmp.path().join("out");
    let err = run_pipeline(&data, &options, &out).unwrap_err();
    assert!(matches!(err.kind, ErrorKind::Data));
    assert_eq!(err.exit_code(), 1);

    // The manifest still records the failed run.
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"success\": false") || manifest.contains("\"success\":false"));
}

#[test]
fn unknown_option_key_warns_but_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let options = write_options(
        tmp.path(),
        r#"{"optimization": {"type": "copper_plate", "typo_key": 1}}"#,
    );
    let out = tmp.path().join("out");
    let manifest = run_pipeline(&fixtures_dir().join("two_node"), &options, &out).unwrap();
    assert!(manifest.success);
    assert!(
        manifest.warnings.iter().any(|w| w.contains("typo_key")),
        "warnings: {:?}",
        manifest.warnings
    );
}

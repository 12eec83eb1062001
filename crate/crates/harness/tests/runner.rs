use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use wfprop_harness::output::read_table;
use wfprop_harness::scenarios::resolve;
use wfprop_harness::{list_scenarios, run_scenario, HarnessError, ScenarioConfig, CONFIG_VERSION};

fn config_error(text: &str) -> String {
    let err = ScenarioConfig::from_json(text)
        .and_then(|c| resolve(&c).map(|_| ()))
        .expect_err("config should be rejected");
    match err {
        HarnessError::Config(m) => m,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn rejects_malformed_configs() {
    let unknown = config_error(r#"{"version": 1, "scenario": "flat_flow", "colour": 3}"#);
    assert!(unknown.contains("colour"), "{unknown}");

    let unused = config_error(r#"{"version": 1, "scenario": "flat_flow", "h_list": [0.1]}"#);
    assert!(unused.contains("h_list"), "{unused}");

    let version = config_error(r#"{"version": 99, "scenario": "flat_flow"}"#);
    assert!(version.contains("99"), "{version}");

    let tolerance = config_error(r#"{"version": 1, "scenario": "flat_flow", "tolerances": {"bogus": 1.0}}"#);
    assert!(tolerance.contains("bogus"), "{tolerance}");

    let scenario = config_error(r#"{"version": 1, "scenario": "nope"}"#);
    assert!(scenario.contains("nope"), "{scenario}");

    let h = config_error(r#"{"version": 1, "scenario": "thm13_recurrence_flat", "h_list": [2.0]}"#);
    assert!(h.contains('h'), "{h}");
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_write_identical_tables() {
    let mut flat = ScenarioConfig::named("thm13_recurrence_flat");
    flat.h_list = Some(vec![1.0 / 16.0]);
    for config in [ScenarioConfig::named("flat_flow"), flat] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_scenario(&config, Some(a.path())).unwrap();
        run_scenario(&config, Some(b.path())).unwrap();
        let (fa, fb) = (csv_bytes(a.path()), csv_bytes(b.path()));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{} tables differ between runs", config.scenario);
    }
}

#[test]
fn summary_carries_criteria_config_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ScenarioConfig::named("h0_identities");
    config.plots = Some(true);
    let summary = run_scenario(&config, Some(dir.path())).unwrap();
    assert!(summary.passed);
    assert_eq!(summary.criteria.len(), 4);

    let text = std::fs::read_to_string(dir.path().join("h0_identities_summary.json")).unwrap();
    let json: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["scenario"], "h0_identities");
    assert_eq!(json["config"]["grid"]["points"][0], 4096);
    assert_eq!(json["config_hash"].as_str().unwrap().len(), 64);
    for c in json["criteria"].as_array().unwrap() {
        assert!(c["measured"].is_number());
        assert!(c["threshold"].is_object());
    }

    let csv = dir.path().join("h0_identities_identities.csv");
    let first = std::fs::read_to_string(&csv).unwrap();
    assert!(first.starts_with(&format!("# scenario=h0_identities table=identities config_sha256={}", summary.config_hash)));
    let (header, rows) = read_table(&csv).unwrap();
    assert_eq!(header, ["state", "identity", "residual"]);
    assert_eq!(rows.len(), 4);
    for path in &summary.artifacts {
        assert!(Path::new(path).exists(), "{path}");
    }
}

#[test]
fn scenario_errors_are_recorded_not_raised() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ScenarioConfig::named("thm11_backward");
    config.times = Some(vec![4.0]);
    let summary = run_scenario(&config, Some(dir.path())).unwrap();
    assert!(!summary.passed);
    assert!(summary.error.as_deref().unwrap().contains('4'));
    assert!(dir.path().join("thm11_backward_summary.json").exists());
}

#[test]
fn schema_matches_config_and_registry() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/schema/scenario.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(schema["properties"]["version"]["const"], CONFIG_VERSION);

    let names: BTreeSet<String> = schema["properties"]["scenario"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let registered: BTreeSet<String> = list_scenarios().iter().map(|(n, _)| n.to_string()).collect();
    assert_eq!(names, registered);

    let mut full = ScenarioConfig::named("flat_flow");
    full.output_dir = Some("out".into());
    full.plots = Some(false);
    full.samples = Some(1);
    full.seed = Some(1);
    full.dt = Some(1e-3);
    full.h_list = Some(vec![0.1]);
    full.times = Some(vec![1.0]);
    full.lambdas = Some(vec![1.0, 2.0]);
    full.points = Some(vec![]);
    full.tolerances.insert("k".into(), 1.0);
    full.grid = Some(serde_json::from_str(r#"{"points": [64], "extent": [1.0]}"#).unwrap());
    full.field = Some(serde_json::from_value(schema_field_example()).unwrap());
    let fields: BTreeSet<String> = serde_json::to_value(&full).unwrap().as_object().unwrap().keys().cloned().collect();
    let properties: BTreeSet<String> = schema["properties"].as_object().unwrap().keys().cloned().collect();
    assert_eq!(fields, properties);
}

fn schema_field_example() -> Value {
    serde_json::json!({
        "dimension": 1,
        "metric": {"shape": "isotropic", "profile": {"kind": "rational", "coupling": 0.3, "exponent": 2.0}},
        "potential": {"shape": "none"},
        "decay_mu": 2.0
    })
}

fn wfprop(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wfprop")).args(args).output().unwrap()
}

#[test]
fn cli_lists_runs_and_reports_exit_codes() {
    let list = wfprop(&["list"]);
    assert!(list.status.success());
    let text = String::from_utf8(list.stdout).unwrap();
    for name in ["thm11_forward", "thm42_resonant", "lemma21_escape"] {
        assert!(text.contains(name), "{text}");
    }

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = wfprop(&["run", "h0_identities", "--out", out]);
    assert_eq!(ok.status.code(), Some(0));

    let strict = dir.path().join("strict.json");
    std::fs::write(&strict, r#"{"version": 1, "scenario": "h0_identities", "tolerances": {"identity": 1e-30}}"#).unwrap();
    let fail = wfprop(&["run", "h0_identities", "--config", strict.to_str().unwrap(), "--out", out]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8(fail.stdout).unwrap().contains("FAIL"));

    let mismatch = wfprop(&["run", "flat_flow", "--config", strict.to_str().unwrap(), "--out", out]);
    assert_eq!(mismatch.status.code(), Some(2));

    let quick = dir.path().join("quick.json");
    std::fs::write(&quick, r#"{"version": 1, "scenario": "thm13_recurrence_flat", "h_list": [0.0625]}"#).unwrap();
    let run = wfprop(&["run", "thm13_recurrence_flat", "--config", quick.to_str().unwrap(), "--out", out]);
    assert_eq!(run.status.code(), Some(0));
    let csv = dir.path().join("thm13_recurrence_flat_peaks.csv");
    let plot = wfprop(&["plot", csv.to_str().unwrap(), "--x", "h", "--y", "error", "c"]);
    assert!(plot.status.success(), "{}", String::from_utf8_lossy(&plot.stderr));
    assert!(csv.with_extension("svg").exists());
}

use std::path::Path;
use std::process::{Command, Output};

const CASE1_CONFIG: &str = r#"
[[stages]]
contrast = "1,L1"
tfree = "1,L1"
propensity = "1,L1"

[[stages]]
contrast = "1,L2"
tfree = "1,L1,A1,L1:A1,L2"
propensity = "1,L2"
"#;

fn dtrlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtrlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("DTRLAB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, case: &str, n: &str, file: &str) {
    let o = dtrlab(dir, &["simulate", "--case", case, "-n", n, "--seed", "7", "--out", file]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn simulate_headers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dtrlab(tmp.path(), &["simulate", "--case", "case1", "-n", "3", "--seed", "7"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "L1,A1,L2,A2,Y");
    assert_eq!(lines.len(), 4);

    let o = dtrlab(tmp.path(), &["simulate", "--case", "case2", "-n", "10"]);
    assert_eq!(stdout(&o).lines().next().unwrap(), "W,L11,L12,A1,L21,L22,A2,L31,L32,A3,Y");
    assert_eq!(stdout(&o).lines().count(), 11);
}

#[test]
fn simulate_is_byte_reproducible_and_seeded_by_env() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "50", "a.csv");
    simulate(tmp.path(), "case1", "50", "b.csv");
    let a = std::fs::read(tmp.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(tmp.path().join("b.csv")).unwrap());

    let via_env = Command::new(env!("CARGO_BIN_EXE_dtrlab"))
        .args(["simulate", "--case", "case1", "-n", "50"])
        .env("DTRLAB_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(via_env.stdout, a);
    let other = dtrlab(tmp.path(), &["simulate", "--case", "case1", "-n", "50", "--seed", "8"]);
    assert_ne!(other.stdout, a);
}

#[test]
fn unknown_method_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dtrlab(tmp.path(), &["fit", "--method", "sarsa", "--data", "x.csv", "--case", "case1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for m in ["q", "a1", "a4", "dwols", "ctree", "ipwe", "aipwe", "bowl"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn aipwe_without_class_names_the_missing_block() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "200", "d.csv");
    std::fs::write(tmp.path().join("cfg.toml"), CASE1_CONFIG).unwrap();
    let o = dtrlab(tmp.path(), &["fit", "--method", "aipwe", "--data", "d.csv", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[search]"), "{}", stderr(&o));
}

#[test]
fn fit_without_model_spec_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "100", "d.csv");
    let o = dtrlab(tmp.path(), &["fit", "--method", "q", "--data", "d.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dtrlab(tmp.path(), &["fit", "--method", "q", "--data", "nope.csv", "--case", "case1"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_column_in_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "100", "d.csv");
    std::fs::write(tmp.path().join("cfg.toml"), CASE1_CONFIG.replace("1,L2\"\ntfree", "1,L9\"\ntfree")).unwrap();
    let o = dtrlab(tmp.path(), &["fit", "--method", "q", "--data", "d.csv", "--config", "cfg.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L9"), "{}", stderr(&o));
}

#[test]
fn q_fit_reports_threshold_rules() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "500", "d.csv");
    std::fs::write(tmp.path().join("cfg.toml"), CASE1_CONFIG).unwrap();
    let o = dtrlab(
        tmp.path(),
        &["fit", "--method", "q", "--data", "d.csv", "--config", "cfg.toml", "--json", "--regime-out", "r.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let labels: Vec<&str> = report["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["label"].as_str().unwrap())
        .collect();
    assert_eq!(labels.iter().filter(|l| l.starts_with("psi2")).count(), 2);
    assert!(report["rules"][1].as_str().unwrap().starts_with("treat if L2 < "));
    for key in ["seed", "config_hash", "method", "clipped_propensities"] {
        assert!(!report[key].is_null(), "{key}");
    }
    assert!(tmp.path().join("r.json").exists());

    let table = dtrlab(tmp.path(), &["fit", "--method", "q", "--data", "d.csv", "--config", "cfg.toml"]);
    assert!(stdout(&table).contains("stage 2: treat if L2 <"));
}

#[test]
fn bootstrap_adds_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case1", "300", "d.csv");
    let o = dtrlab(
        tmp.path(),
        &["fit", "--method", "a3", "--data", "d.csv", "--case", "case1", "--bootstrap", "20", "--json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    for p in report["parameters"].as_array().unwrap() {
        assert!(p["se"].as_f64().unwrap() > 0.0);
    }
    assert_eq!(report["bootstrap"]["replicates"], 20);
}

#[test]
fn long_format_matches_wide() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = "L1,A1,L2,A2,Y\n300,1,310,0,900\n350,0,,,800\n";
    let long = "id,stage,L,A,Y\n1,1,300,1,\n2,1,350,0,800\n1,2,310,0,900\n";
    std::fs::write(tmp.path().join("w.csv"), wide).unwrap();
    std::fs::write(tmp.path().join("l.csv"), long).unwrap();
    let a = dtrlab::io::load_dataset(tmp.path().join("w.csv"), false).unwrap();
    let b = dtrlab::io::load_dataset(tmp.path().join("l.csv"), true).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_regime_evaluates_and_scores_perfectly() {
    let tmp = tempfile::tempdir().unwrap();
    let regime = r#"{"rules": [
        {"kind": "threshold", "stage": 1, "column": "L1", "cutoff": 250.0, "direction": "below"},
        {"kind": "threshold", "stage": 2, "column": "L2", "cutoff": 360.0, "direction": "below"}]}"#;
    std::fs::write(tmp.path().join("oracle.json"), regime).unwrap();
    let o = dtrlab(
        tmp.path(),
        &["evaluate", "--regime", "oracle.json", "--case", "case1", "--draws", "10000", "--json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let value = v["report"]["value"].as_f64().unwrap();
    assert!((value - 1120.0).abs() < 8.0, "{value}");

    let o = dtrlab(tmp.path(), &["accuracy", "--regime", "oracle.json", "--case", "case1", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["report"]["overall"].as_f64(), Some(1.0));

    // three-stage generator, two-rule regime
    let o = dtrlab(tmp.path(), &["evaluate", "--regime", "oracle.json", "--case", "case2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("stage"), "{}", stderr(&o));
}

#[test]
fn fitted_regime_round_trips_through_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "case2", "400", "d.csv");
    for m in ["ctree", "bowl", "a3"] {
        let o = dtrlab(
            tmp.path(),
            &["fit", "--method", m, "--data", "d.csv", "--case", "case2", "--regime-out", "r.json"],
        );
        assert!(o.status.success(), "{m}: {}", stderr(&o));
        let o = dtrlab(tmp.path(), &["accuracy", "--regime", "r.json", "--case", "case2", "--n-test", "200"]);
        assert!(o.status.success(), "{m}: {}", stderr(&o));
        assert!(stdout(&o).contains("accu3"), "{m}");
    }
}

#[test]
fn spec_file_generator_matches_builtin_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = dtrlab::simlab::case1_spec().to_toml().unwrap();
    std::fs::write(tmp.path().join("case1.toml"), spec).unwrap();
    let o = dtrlab(tmp.path(), &["simulate", "--spec", "case1.toml", "-n", "20"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().next(), Some("L1,A1,L2,A2,Y"));
    std::fs::write(tmp.path().join("bad.toml"), "not = [valid").unwrap();
    let o = dtrlab(tmp.path(), &["simulate", "--spec", "bad.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn benchmark_writes_tables_and_na_markers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dtrlab(
        tmp.path(),
        &["benchmark", "--suite", "case1", "-R", "1", "--n-train", "300", "--n-test", "100", "--methods", "q,a3", "--out", "out"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in ["parameters.csv", "accuracy.csv", "replicates.csv", "report.txt", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let params = std::fs::read_to_string(out.join("parameters.csv")).unwrap();
    assert!(params.starts_with("method,parameter,truth,mean,sd,successes,failures"));
    assert!(params.lines().skip(1).all(|l| l.split(',').nth(4) == Some("NA")), "{params}");
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ponly(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ponly"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn betas(v: &Value) -> Vec<f64> {
    v["fit"]["beta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b.as_f64().unwrap())
        .collect()
}

/// A small mixture-study dataset in a fresh directory.
fn simulated() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let o = ponly(
        dir.path(),
        &["simulate", "--preset", "mixture45", "--n1", "200", "--n0", "1500", "--seed", "4", "--out", "d.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let p = dir.path().join("d.csv");
    (dir, p)
}

#[test]
fn ipp_and_maxent_agree() {
    let (dir, _) = simulated();
    let ipp = json(&ponly(dir.path(), &["fit", "--model", "ipp", "--data", "d.csv", "--area", "1"]));
    let me = json(&ponly(dir.path(), &["fit", "--model", "maxent", "--data", "d.csv", "--area", "1"]));
    let (a, b) = (betas(&ipp), betas(&me));
    assert!((a[0] - b[0]).abs() < 1e-8);
    assert_eq!(ipp["fit"]["model"], "ipp");
    assert_eq!(ipp["config"]["seed"], 0);
    assert_eq!(ipp["ponly_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn every_model_runs() {
    let (dir, _) = simulated();
    for m in ["ipp", "maxent", "lr", "iwlr", "berman-turner"] {
        let o = ponly(dir.path(), &["fit", "--model", m, "--data", "d.csv", "--area", "1", "--penalty", "l2", "--lambda", "0.1"]);
        assert_eq!(code(&o), 0, "{m}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(json(&o)["fit"]["converged"].as_bool().unwrap());
    }
}

#[test]
fn forced_small_weight_is_flagged() {
    let (dir, _) = simulated();
    let ipp = json(&ponly(dir.path(), &["fit", "--model", "ipp", "--data", "d.csv", "--area", "1"]));
    let small = json(&ponly(dir.path(), &["fit", "--model", "iwlr", "--W", "10", "--data", "d.csv", "--area", "1"]));
    let auto = json(&ponly(dir.path(), &["fit", "--model", "iwlr", "--data", "d.csv", "--area", "1"]));
    assert!((betas(&small)[0] - betas(&ipp)[0]).abs() > 1e-6);
    assert!((betas(&auto)[0] - betas(&ipp)[0]).abs() < 1e-6);
    assert_eq!(small["metadata"]["within_limit_tolerance"], false);
    assert!(small["metadata"]["beta_gap_to_reference"].as_f64().unwrap() > 1e-6);
}

#[test]
fn missing_area_is_usage_error() {
    let (dir, _) = simulated();
    let o = ponly(dir.path(), &["fit", "--model", "ipp", "--data", "d.csv"]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("--area") && err.contains("Usage"), "{err}");
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.csv"), "y,x1\n1,0.5\n0,abc\n0,1\n").unwrap();
    let o = ponly(dir.path(), &["fit", "--model", "ipp", "--data", "bad.csv", "--area", "1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));

    let o = ponly(dir.path(), &["fit", "--model", "ipp", "--data", "nope.csv", "--area", "1"]);
    assert_eq!(code(&o), 1);
    let o = ponly(dir.path(), &["fit", "--model", "glm", "--data", "bad.csv", "--area", "1"]);
    assert_eq!(code(&o), 1);
    let o = ponly(dir.path(), &["frobnicate"]);
    assert_eq!(code(&o), 1);
    let o = ponly(dir.path(), &["--help"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn separated_data_is_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sep.csv"), "y,x1\n1,3\n1,4\n0,0\n0,1\n0,2\n0,0.5\n").unwrap();
    let o = ponly(dir.path(), &["fit", "--model", "lr", "--data", "sep.csv", "--area", "1"]);
    assert_eq!(code(&o), 2);
    let v = json(&o);
    assert_eq!(v["error"]["kind"], "divergence");
    assert!(v.get("fit").is_none());
}

#[test]
fn simulate_counts_and_thinning_identity() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#""domain":[[0,2],[0,1]],"n0":500,"seed":3"#;
    fs::write(
        dir.path().join("plain.json"),
        format!(r#"{{"intensity":{{"components":[{{"alpha":4.0,"beta":[0.5,-1.0]}}]}},{base}}}"#),
    )
    .unwrap();
    fs::write(
        dir.path().join("thin.json"),
        format!(
            r#"{{"thinning":{{"occurrence":{{"components":[{{"alpha":4.0,"beta":[0.5,-1.0]}}]}},"occurrence_features":[0,1],"gamma":0.0,"delta":[],"detection_features":[]}},{base}}}"#
        ),
    )
    .unwrap();
    assert_eq!(code(&ponly(dir.path(), &["simulate", "--config", "plain.json", "--out", "a.csv"])), 0);
    assert_eq!(code(&ponly(dir.path(), &["simulate", "--config", "thin.json", "--out", "b.csv"])), 0);
    let rows = |f: &str| -> Vec<String> {
        fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    let (a, b) = (rows("a.csv"), rows("b.csv"));
    assert_eq!(a, b);
    let n1 = a.iter().skip(1).filter(|l| l.starts_with("1,")).count();
    assert!(n1 > 0);
    assert_eq!(a.len() - 1, n1 + 500);
}

#[test]
fn preset_rows() {
    let (_dir, p) = simulated();
    let text = fs::read_to_string(p).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "y,x1");
    assert_eq!(rows.len() - 1, 1700);
}

#[test]
fn sweep_single_replicate_and_bad_estimator() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.json"), r#"{"n1": 200, "n0_grid": [400, 800], "estimators": ["lr"]}"#).unwrap();
    let o = ponly(dir.path(), &["sweep", "--config", "s.json", "--replicates", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("lr,400,0,"));

    fs::write(dir.path().join("bad.json"), r#"{"estimators": ["glm"]}"#).unwrap();
    assert_eq!(code(&ponly(dir.path(), &["sweep", "--config", "bad.json"])), 1);
    assert_eq!(code(&ponly(dir.path(), &["sweep", "--estimators", "lr,glm"])), 1);
}

#[test]
fn check_exit_codes() {
    let (dir, _) = simulated();
    let o = ponly(dir.path(), &["check", "--data", "d.csv", "--area", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["command"], "check");
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l["pass"] == true));

    let o = ponly(dir.path(), &["check", "--data", "d.csv", "--area", "1", "--tolerance", "1e-15"]);
    assert_eq!(code(&o), 3);

    let o = ponly(dir.path(), &["check", "--data", "d.csv", "--area", "1", "--W", "10"]);
    assert_eq!(code(&o), 3);

    let mut csv = String::from("y,x1,x2\n");
    for i in 0..60 {
        let x = (i as f64 * 0.37).sin();
        csv.push_str(&format!("{},{x},{}\n", u8::from(i % 4 == 0), 3.0 * x - 1.0));
    }
    fs::write(dir.path().join("col.csv"), csv).unwrap();
    let o = ponly(dir.path(), &["check", "--data", "col.csv", "--area", "1"]);
    assert_eq!(code(&o), 2);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("rank_deficient"), "{text}");
}

#[test]
fn thread_variable_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ponly"))
        .args(["sweep", "--replicates", "1", "--n1", "50"])
        .env("PONLY_THREADS", "zero")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn output_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_ponly"))
            .args(["sweep", "--replicates", "3", "--n1", "150"])
            .env("PONLY_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("1"), run("4"));
}

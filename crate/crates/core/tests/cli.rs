use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disorder"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: serde_json::Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

fn reference_model() -> serde_json::Value {
    let text = std::fs::read_to_string(configs().join("reference_model.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn solve_writes_table_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.csv");
    let o = run(&[
        "solve", "--b", "1", "--sigma", "1", "--lambda", "0.1", "--c", "1", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(&out).unwrap();
    assert_eq!(table.lines().next(), Some("pi,U,U_prime"));
    assert_eq!(table.lines().count(), 2002);
    let header: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("sol.header.json")).unwrap()).unwrap();
    let a = header["threshold"].as_f64().unwrap();
    assert!((a - 0.129563).abs() < 1e-5, "{a}");
    assert!(header["tolerances"].is_object());
}

#[test]
fn solve_json_format() {
    let o = run(&["solve", "--b", "-1", "--sigma", "1", "--lambda", "0.1", "--c", "1", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pi"].as_array().unwrap().len(), 2001);
    assert!((v["header"]["threshold"].as_f64().unwrap() - 0.129563).abs() < 1e-5);
}

#[test]
fn missing_config_exits_2_and_names_file() {
    let o = run(&["experiment", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.json"), "{}", stderr(&o));
}

#[test]
fn missing_model_exits_2() {
    let o = run(&["simulate", "--model", "no_such_model.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_model.json"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["risk"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let model = configs().join("reference_model.json");
    let o = run(&["risk", "--model", model.to_str().unwrap(), "--paths", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["risk", "--model", model.to_str().unwrap(), "--strategy", "sometimes:1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_experiment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        serde_json::json!({"name": "telepathy", "model": reference_model()}),
    );
    let o = run(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("telepathy"));
}

#[test]
fn invalid_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = reference_model();
    m["atoms"][0]["p1"] = serde_json::json!(-0.5);
    let p = dir.path().join("m.json");
    std::fs::write(&p, m.to_string()).unwrap();
    let o = run(&["simulate", "--model", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn failing_check_exits_1_with_listing() {
    let dir = tempfile::tempdir().unwrap();
    // Equal time steps give a gap ratio of exactly one.
    let cfg = write_config(
        dir.path(),
        "flat.json",
        serde_json::json!({"name": "filter_consistency", "model": reference_model(),
            "sweep": [0.01, 0.01], "paths": 10, "horizon": 2.0}),
    );
    let o = run(&["experiment", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("checks failed"), "{err}");
    assert!(err.contains("filter.ratio_lower"), "{err}");
}

#[test]
fn experiment_writes_report_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "tower.json",
        serde_json::json!({"name": "expectation_identity", "model": reference_model(),
            "paths": 1000, "dt": 0.01, "checkpoints": [0, 1, 2], "seed": 4}),
    );
    let out = dir.path().join("report.csv");
    let o = run(&["experiment", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.starts_with("sweep_value,anchor,"));
    assert_eq!(report.lines().count(), 7);
    let table = std::fs::read_to_string(dir.path().join("report.tower.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("t,mean,std_error,cdf"));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn dp_writes_value_and_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let model = configs().join("reference_model.json");
    let o = run(&[
        "dp", "--model", model.to_str().unwrap(), "--h", "0.05", "--dt", "0.01", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = std::fs::read_to_string(&out).unwrap();
    assert_eq!(v.lines().next(), Some("pi_1,pi_2,value,stop"));
    assert_eq!(v.lines().count(), 1 + 21 * 22 / 2);
    let b = std::fs::read_to_string(dir.path().join("v.boundary.csv")).unwrap();
    assert_eq!(b.lines().next(), Some("pi_1,pi_2,norm"));
    assert!(b.lines().count() > 1);
}

#[test]
fn simulate_and_filter_share_the_path() {
    let model = configs().join("reference_model.json");
    let m = model.to_str().unwrap();
    let sim = run(&["simulate", "--model", m, "--dt", "0.01", "--horizon", "1", "--seed", "3"]);
    let filt = run(&["filter", "--model", m, "--dt", "0.01", "--horizon", "1", "--seed", "3"]);
    assert!(sim.status.success() && filt.status.success());
    let sim = String::from_utf8(sim.stdout).unwrap();
    let filt = String::from_utf8(filt.stdout).unwrap();
    assert_eq!(sim.lines().count(), 101);
    assert_eq!(filt.lines().count(), 102);
    assert!(filt.lines().nth(1).unwrap().starts_with("0,0.05,0.05,0.1,"), "{}", filt.lines().nth(1).unwrap());
}

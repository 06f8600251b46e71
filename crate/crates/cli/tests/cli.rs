use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn homolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homolab")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("UTF-8 path")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn cell_shortcut_writes_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cell_report.json");
    let field = configs().join("fields/laminate.json");
    let run = homolab(&["cell", "--field", path_str(&field), "--grid", "64", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let report = read_json(&out);
    assert_eq!(report["schema"], "homolab.report/1");
    assert_eq!(report["kind"], "cell");
    let a11 = report["rows"][0]["metrics"]["a_hat_11"].as_f64().unwrap();
    assert!((a11 - 3f64.sqrt()).abs() < 1e-6);
}

#[test]
fn weyl_series_csv_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("series.csv");
    let surface = configs().join("surfaces/circle.json");
    let field = configs().join("fields/cos_y1.json");
    let run =
        homolab(&["weyl", "--surface", path_str(&surface), "--field", path_str(&field), "--eps", "2^-3..2^-9", "--out", path_str(&out)]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("eps,value_re,value_im,defect,est_quad_err"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0][0], 0.125);
    assert_eq!(rows[6][0], 2f64.powi(-9));
    assert!(rows.iter().all(|r| r.len() == 5 && r[3] > 0.0));
}

#[test]
fn config_runs_report_rules_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("square.json");
    let csv = dir.path().join("square.csv");
    let cfg = configs().join("weyl_square.toml");
    let run = homolab(&["weyl", "--config", path_str(&cfg), "--out", path_str(&out), "--csv", path_str(&csv)]);
    assert_eq!(code(&run), 0);
    let report = read_json(&out);
    assert_eq!(report["passed"], true);
    assert!(report["flags"].as_array().unwrap().iter().any(|f| f == "no_convergence"));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("eps,grid,h,eps_over_h,"));
    assert!(String::from_utf8_lossy(&run.stderr).contains("PASS"));
}

#[test]
fn failing_rule_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    std::fs::write(
        &cfg,
        r#"
kind = "weyl"
surface = { type = "circle", r = 1.0 }
eps = "2^-3..2^-5"
[fields]
f = { kind = "scalar", d = 2, modes = [{ k = [1, 0], re = 0.5 }] }
[[rules]]
type = "bound"
metric = "defect"
max = 1e-9
"#,
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let run = homolab(&["weyl", "--config", path_str(&cfg), "--out", path_str(&out)]);
    assert_eq!(code(&run), 1);
    assert_eq!(read_json(&out)["passed"], false);
    assert!(String::from_utf8_lossy(&run.stderr).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let mismatch = homolab(&["weyl", "--config", path_str(&configs().join("cell_laminate.toml")), "--out", path_str(&out)]);
    assert_eq!(code(&mismatch), 2);
    let missing = homolab(&["cell", "--field", "/nonexistent/field.json", "--out", path_str(&out)]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/field.json"));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "kind = \"weyl\"\neps = \"2^-3..sideways\"\n").unwrap();
    assert_eq!(code(&homolab(&["weyl", "--config", path_str(&bad), "--out", path_str(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let field = dir.path().join("negative.json");
    std::fs::write(&field, r#"{"kind": "tensor4", "m": 1, "d": 2, "isotropic": true, "modes": [{"k": [0, 0], "re": -1.0}]}"#).unwrap();
    let run = homolab(&["cell", "--field", path_str(&field), "--grid", "16", "--out", path_str(&dir.path().join("x.json"))]);
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
}

#[test]
fn report_goes_to_stdout_without_out() {
    let surface = configs().join("surfaces/circle.json");
    let field = configs().join("fields/cos_y1.json");
    let run = homolab(&["m-eps", "--surface", path_str(&surface), "--field", path_str(&field), "--eps", "0.25,0.125"]);
    assert_eq!(code(&run), 0);
    let report: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["kind"], "m_eps");
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("m_eps_circle.toml");
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("run{i}.json"));
            assert_eq!(code(&homolab(&["m-eps", "--config", path_str(&cfg), "--out", path_str(&out)])), 0);
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_blowuplab"));
    c.env_remove("BLOWUPLAB_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn single_run_dir(out: &Path) -> PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn zero_data_run_does_not_blow_up() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"data": {"eps": 0.0}, "solver": {"t_max": 2.0}}"#);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = single_run_dir(&out);
    let record: Value = serde_json::from_str(&fs::read_to_string(dir.join("record.json")).unwrap()).unwrap();
    assert_ne!(record["termination"], "blowup", "{}", record["termination"]);
    let series = fs::read_to_string(dir.join("series.csv")).unwrap();
    for row in csv_rows(&series) {
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"metric": {"kind": "flat"}, "data": {"eps": 1.0}}"#);
    let mut snapshots = Vec::new();
    for out in ["a", "b"] {
        let out = tmp.path().join(out);
        let o = run(&["simulate", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let dir = single_run_dir(&out);
        let files: Vec<_> = ["config.json", "record.json", "series.csv"]
            .iter()
            .map(|f| fs::read(dir.join(f)).unwrap())
            .collect();
        snapshots.push((dir.file_name().unwrap().to_owned(), files));
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn environment_sets_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"data": {"eps": 0.0}, "solver": {"t_max": 0.5}}"#);
    let out = tmp.path().join("from-env");
    let o = bin()
        .args(["simulate", "-c", cfg.to_str().unwrap()])
        .env("BLOWUPLAB_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    single_run_dir(&out);
}

#[test]
fn exit_codes_distinguish_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nowhere");
    let o = run(&["verify", "functional", "--run", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let bad = write_config(tmp.path(), "bad.json", r#"{"metric": {"kind": "exp", "eps_g": 1.5}}"#);
    let o = run(&["simulate", "-c", bad.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let unknown = write_config(tmp.path(), "unknown.json", r#"{"dimension": 3}"#);
    let o = run(&["simulate", "-c", unknown.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["simulate", "-c", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn flat_eigen_table_has_no_correction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"metric": {"kind": "flat"}}"#);
    let out = tmp.path().join("out");
    let o = run(&["eigen", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dirs: Vec<_> = fs::read_dir(out.join("eigen")).unwrap().map(|e| e.unwrap().path()).collect();
    let summary: Value = serde_json::from_str(&fs::read_to_string(dirs[0].join("summary.json")).unwrap()).unwrap();
    for v in summary["psi_sup_norms"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.0);
    }
    let table = fs::read_to_string(dirs[0].join("table.csv")).unwrap();
    assert!(csv_rows(&table).iter().all(|r| r[3].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn lifespan_bound_is_affine_in_eps_power() {
    let o = run(&[
        "lifespan",
        "--eps-sweep",
        "1.0:0.1:6",
        "--c-frame",
        "0.3",
        "--c0",
        "100",
        "--b1",
        "4",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<(f64, f64)> = csv_rows(&text)
        .iter()
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    assert_eq!(rows.len(), 6);
    let slope = (rows[5].1 - rows[0].1) / (rows[5].0 - rows[0].0);
    assert!(slope > 0.0);
    for &(x, y) in &rows {
        let fit = rows[0].1 + slope * (x - rows[0].0);
        assert!((y - fit).abs() <= 1e-9 * y.abs().max(1.0), "{x} {y} {fit}");
    }
}

#[test]
fn flat_pipeline_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"metric": {"kind": "flat"}, "data": {"eps": 0.5}}"#);
    let out = tmp.path().join("out");
    let o = run(&["simulate", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let dir = single_run_dir(&out);
    let o = run(&["verify", "all", "--run", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["iteration"]["constants_source"], "measured");
    let stored: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(stored, report);
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_zeno");

fn zeno(args: &[&str], out_dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .env("ZENO_OUTPUT_DIR", out_dir)
        .env("ZENO_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL_ZENO: &str = r#"{"protocol": {"kind": "zeno", "n_list": [1, 3, 10]},
    "grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 1024}, "ensemble": {"n_samples": 32, "rng_seed": 4}}"#;

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_ZENO);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let out = zeno(&["zeno", "-c", &cfg], dir);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["zeno.csv", "zeno.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // The JSON echoes the output directory, so compare a rerun into the same place.
    let first = fs::read(a.join("zeno.json")).unwrap();
    assert!(zeno(&["zeno", "-c", &cfg], &a).status.success());
    assert_eq!(first, fs::read(a.join("zeno.json")).unwrap());
    let csv = fs::read_to_string(a.join("zeno.csv")).unwrap();
    assert!(csv.contains("config_hash=") && csv.contains("seed=4"));
}

#[test]
fn fit_command_matches_stored_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_ZENO);
    assert!(zeno(&["zeno", "-c", &cfg], tmp.path()).status.success());
    let out = zeno(
        &[
            "fit",
            "-i",
            tmp.path().join("zeno.csv").to_str().unwrap(),
            "-f",
            "inverse-n",
        ],
        tmp.path(),
    );
    assert!(out.status.success());
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("zeno.json")).unwrap()).unwrap();
    assert_eq!(fit, run["extra"]["fit_inverse_n"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), r#"{"protocol": {}}"#);
    let out = zeno(&["zeno", "-c", &bad], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind"));

    let other = write_config(tmp.path(), r#"{"protocol": "transport"}"#);
    assert_eq!(zeno(&["zeno", "-c", &other], tmp.path()).status.code(), Some(2));

    // The default 4096-point grid cannot hold a transport path this long.
    let off_grid = write_config(tmp.path(), r#"{"protocol": {"kind": "transport", "n_list": [500]}}"#);
    assert_eq!(zeno(&["transport", "-c", &off_grid], tmp.path()).status.code(), Some(2));

    let coarse = write_config(
        tmp.path(),
        r#"{"protocol": {"kind": "zeno", "n_list": [2]}, "grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 1024},
            "step": {"dt_pulse": 0.01, "dt_free": 0.5, "phase_cap": 0.5}, "engine": "split_step", "ensemble": {"n_samples": 2}}"#,
    );
    assert_eq!(zeno(&["zeno", "-c", &coarse], tmp.path()).status.code(), Some(3));

    let flat = tmp.path().join("flat.csv");
    fs::write(&flat, "x,y\n0,0.5\n1,0.5\n2,0.5\n3,0.5\n4,0.5\n5,0.5\n6,0.5\n7,0.5\n").unwrap();
    let out = zeno(
        &["fit", "-i", flat.to_str().unwrap(), "-f", "sinusoid-tied"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(4));

    let out = Command::new(BIN)
        .arg("zeno")
        .arg("--dry-run")
        .env("ZENO_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_reports_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.json");
    let out = zeno(&["validate", "-o", report.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 5);
}

#[test]
fn snapshot_writes_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"protocol": {"kind": "snapshot", "n_pulses": 3, "total_t": 6.0}, "grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 1024}}"#,
    );
    let out = zeno(&["snapshot", "-c", &cfg], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = fs::read_to_string(tmp.path().join("snapshot_records.csv")).unwrap();
    assert_eq!(records.lines().count(), 4);
    let psi = fs::read_to_string(tmp.path().join("snapshot_psi.csv")).unwrap();
    assert_eq!(psi.lines().count(), 1025);
}

#[test]
fn dry_run_echoes_resolved_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = zeno(&["strength", "--dry-run", "--seed", "11"], tmp.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["grid"]["n_points"], 4096);
    assert_eq!(v["ensemble"]["rng_seed"], 11);
    assert_eq!(v["output"]["dir"], tmp.path().to_str().unwrap());
    assert_eq!(v["protocol"]["kind"], "strength");
}

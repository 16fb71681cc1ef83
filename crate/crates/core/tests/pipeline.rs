//! Config through simulation, files and back into the fitters.

use zeno_core::config::{ProtocolConfig, parse_config};
use zeno_core::fitting::fit_inverse_n;
use zeno_core::output::{emit_results, read_points_csv};
use zeno_core::protocols::{run_duration_scan, run_zeno_scan};

const DESK: &str =
    r#""grid": {"x_min": -5.0, "x_max": 5.0, "n_points": 1024}, "ensemble": {"n_samples": 48, "rng_seed": 3}"#;

#[test]
fn zeno_files_reproduce_the_in_memory_fit() {
    let cfg = parse_config(&format!(
        r#"{{"protocol": {{"kind": "zeno", "n_list": [1, 2, 5, 10]}}, {DESK}}}"#
    ))
    .unwrap();
    let ProtocolConfig::Zeno(p) = &cfg.protocol else {
        unreachable!()
    };
    let sr = run_zeno_scan(&cfg.simulation(), p, &cfg.ensemble).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&cfg, std::slice::from_ref(&sr), serde_json::Value::Null, dir.path()).unwrap();
    let csv = paths
        .iter()
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let back = read_points_csv(std::fs::File::open(csv).unwrap()).unwrap();
    assert_eq!(fit_inverse_n(&back).unwrap(), fit_inverse_n(&sr.data_points()).unwrap());

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("zeno.json")).unwrap()).unwrap();
    assert_eq!(json["config_hash"], cfg.hash());
    assert_eq!(json["seed"], 3);
    assert_eq!(parse_config(&json["config"].to_string()).unwrap(), cfg);
}

#[test]
fn more_pulses_lose_less() {
    let cfg = parse_config(&format!(
        r#"{{"protocol": {{"kind": "zeno", "n_list": [1, 10]}}, {DESK}}}"#
    ))
    .unwrap();
    let ProtocolConfig::Zeno(p) = &cfg.protocol else {
        unreachable!()
    };
    let sr = run_zeno_scan(&cfg.simulation(), p, &cfg.ensemble).unwrap();
    assert!(sr.points[1].loss_prob < sr.points[0].loss_prob);
    assert!(sr.points.iter().all(|p| (0.0..=1.0).contains(&p.loss_prob)));
}

#[test]
fn longer_free_time_loses_more() {
    let cfg = parse_config(&format!(
        r#"{{"protocol": {{"kind": "duration", "t_list": [4, 24], "tau_list": [1.0]}}, {DESK}}}"#
    ))
    .unwrap();
    let ProtocolConfig::Duration(p) = &cfg.protocol else {
        unreachable!()
    };
    let out = run_duration_scan(&cfg.simulation(), p, &cfg.ensemble).unwrap();
    assert_eq!(out.len(), 1);
    assert!(out[0].points[1].loss_prob >= out[0].points[0].loss_prob);
}

#[test]
fn collapse_only_accounting_never_exceeds_combined() {
    let run = |accounting: &str| {
        let cfg = parse_config(&format!(
            r#"{{"protocol": {{"kind": "zeno", "n_list": [2, 6]}}, "grid": {{"x_min": -5.0, "x_max": 5.0, "n_points": 1024}},
                "ensemble": {{"n_samples": 24, "rng_seed": 3, "accounting": "{accounting}"}}}}"#
        ))
        .unwrap();
        let ProtocolConfig::Zeno(p) = &cfg.protocol else {
            unreachable!()
        };
        run_zeno_scan(&cfg.simulation(), p, &cfg.ensemble).unwrap()
    };
    let (collapse, combined) = (run("collapse"), run("combined"));
    for (a, b) in collapse.points.iter().zip(&combined.points) {
        assert!(a.loss_prob <= b.loss_prob + 1e-12);
        assert_eq!(a.mean_final_x, b.mean_final_x);
    }
}

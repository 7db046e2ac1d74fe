use std::path::Path;
use std::process::{Command, Output};

fn lpaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpaudit")).args(args).output().expect("spawn lpaudit")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_audit_score() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = lpaudit(&["synth", "--users", "6", "--weeks", "8", "--night-shift-users", "1", "--out-dir", path(d)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["dataset.jsonl", "geocode.jsonl", "venues.csv", "timezones.csv", "truth.csv"] {
        assert!(d.join(f).exists(), "{f}");
    }

    let report = d.join("out/report.jsonl");
    let out = lpaudit(&[
        "audit",
        "--dataset",
        path(&d.join("dataset.jsonl")),
        "--geocode-db",
        path(&d.join("geocode.jsonl")),
        "--venue-db",
        path(&d.join("venues.csv")),
        "--tz-db",
        path(&d.join("timezones.csv")),
        "--baselines",
        "H1,H15",
        "--cache-scope",
        "per-user",
        "--eps-m",
        "30",
        "--merge-m",
        "50",
        "--venue-m",
        "25",
        "--cache-m",
        "2",
        "--seed",
        "3",
        "--out",
        path(&report),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(out.status.success(), "{stderr}");
    assert!(stderr.contains("users: 6"), "{stderr}");
    assert!(stderr.contains("sensitive clusters"), "{stderr}");
    let text = std::fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 7);
    let meta: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["cache_scope"], "per-user");
    assert_eq!(meta["stages"]["sensitive"], true);

    let out = lpaudit(&["score", "--report", path(&report), "--truth", path(&d.join("truth.csv"))]);
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("home"), "{table}");
    assert!(table.contains("H15"), "{table}");

    let out = lpaudit(&["score", "--json", "--report", path(&report), "--truth", path(&d.join("truth.csv"))]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["users"], 6);
}

#[test]
fn weighted_baselines_via_trained_weights() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lpaudit(&["synth", "--users", "10", "--weeks", "6", "--night-shift-users", "1", "--out-dir", path(d)]).status.success());
    let (data, geo, tz, truth) = (d.join("dataset.jsonl"), d.join("geocode.jsonl"), d.join("timezones.csv"), d.join("truth.csv"));
    let common = ["--dataset", path(&data), "--geocode-db", path(&geo), "--tz-db", path(&tz)];
    let weights = d.join("weights.csv");
    let mut args = vec!["train-weights"];
    args.extend(common);
    args.extend(["--truth", path(&truth), "--fraction", "0.5", "--out", path(&weights)]);
    let out = lpaudit(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&weights).unwrap().lines().filter(|l| !l.starts_with("hour")).count(), 24);

    let mut args = vec!["audit"];
    args.extend(common);
    args.extend(["--baselines", "H9,H10,H11", "--weights", path(&weights)]);
    let out = lpaudit(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let user: serde_json::Value = serde_json::from_str(stdout.lines().nth(1).unwrap()).unwrap();
    assert_eq!(user["baselines"].as_object().unwrap().len(), 3);
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let out = lpaudit(&["audit", "--geocode-db", "g.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));

    let out = lpaudit(&["audit", "--dataset", "d", "--geocode-db", "g", "--baselines", "H10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("weight"));

    let out = lpaudit(&["audit", "--dataset", "d", "--geocode-db", "g", "--stages", "keyloc,sensitive"]);
    assert_eq!(out.status.code(), Some(2));

    let out = lpaudit(&["audit", "--dataset", "d", "--geocode-db", "g", "--baselines", "H12"]);
    assert!(!out.status.success());
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(lpaudit(&["synth", "--users", "3", "--weeks", "4", "--night-shift-users", "0", "--out-dir", path(d)]).status.success());
    let cfg = serde_json::json!({
        "dataset": d.join("dataset.jsonl"),
        "geocode_db": d.join("geocode.jsonl"),
        "baselines": ["H1"],
        "pipeline": {"eps_m": 20.0},
    });
    let cfg_path = d.join("audit.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = lpaudit(&["audit", "--config", path(&cfg_path), "--merge-m", "40"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let meta: serde_json::Value = serde_json::from_str(stdout.lines().next().unwrap()).unwrap();
    assert_eq!(meta["pipeline"]["eps_m"], 20.0);
    assert_eq!(meta["pipeline"]["merge_m"], 40.0);
    assert_eq!(meta["baselines"], serde_json::json!(["H1"]));
    assert_eq!(meta["providers"]["timezone"], "longitude-bands");
}

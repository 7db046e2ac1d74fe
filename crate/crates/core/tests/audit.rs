use std::path::Path;

use lpaudit::audit::run_audit;
use lpaudit::baseline::HeuristicId;
use lpaudit::config::{AuditConfig, CacheScope, ConfigError};
use lpaudit::audit::AuditError;
use lpaudit::score::score;
use lpaudit::synthgen::{generate_corpus, CorpusPaths, CorpusSpec};

fn corpus(dir: &Path, users: usize) -> CorpusPaths {
    let spec = CorpusSpec { users, weeks: 10, night_shift_users: 2, seed: 11, ..CorpusSpec::default() };
    generate_corpus(&spec).unwrap().write_to_dir(dir).unwrap()
}

fn config(p: &CorpusPaths) -> AuditConfig {
    AuditConfig {
        dataset: Some(p.dataset.clone()),
        geocode_db: Some(p.geocode_db.clone()),
        venue_db: Some(p.venue_db.clone()),
        tz_db: Some(p.tz_db.clone()),
        ..AuditConfig::default()
    }
}

/// Report lines with the wall-clock fields removed.
fn without_timings(jsonl: &str) -> Vec<serde_json::Value> {
    jsonl
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("timings_ms");
            v
        })
        .collect()
}

#[test]
fn ten_users_give_ten_entries() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 10);
    let report = run_audit(&config(&paths)).unwrap();
    assert_eq!(report.users.len(), 10);
    assert_eq!(report.meta.users, 10);
    let ids: Vec<&str> = report.users.iter().map(|u| u.user_id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let jsonl = report.to_jsonl();
    assert_eq!(jsonl.lines().count(), 11);
    assert!(jsonl.lines().next().unwrap().contains(r#""kind":"run""#));
}

#[test]
fn sensitive_stage_without_venues_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 2);
    let mut cfg = config(&paths);
    cfg.venue_db = None;
    cfg.stages.sensitive = true;
    assert!(matches!(run_audit(&cfg), Err(AuditError::Config(ConfigError::Missing(_)))));
}

#[test]
fn requested_baselines_only() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 4);
    let mut cfg = config(&paths);
    cfg.baselines = vec![HeuristicId::H1LargestCluster, HeuristicId::H15SecondLargest];
    let report = run_audit(&cfg).unwrap();
    for u in &report.users {
        assert_eq!(u.baselines.keys().map(String::as_str).collect::<Vec<_>>(), ["H1", "H15"]);
        assert_eq!(u.prediction.baselines.len(), 2);
    }
    assert_eq!(report.meta.baselines, ["H1", "H15"]);
}

#[test]
fn reports_are_deterministic_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 8);
    let mut cfg = config(&paths);
    cfg.stages.sensitive = true;
    cfg.baselines = HeuristicId::ALL.iter().copied().filter(|h| !h.needs_weights()).collect();
    let a = run_audit(&cfg).unwrap().to_jsonl();
    let b = run_audit(&cfg).unwrap().to_jsonl();
    assert_eq!(without_timings(&a), without_timings(&b));

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| run_audit(&cfg)).unwrap().to_jsonl();
    assert_eq!(without_timings(&a), without_timings(&c));
}

#[test]
fn cache_scopes_agree_on_separated_users() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 6);
    let mut cfg = config(&paths);
    let global = run_audit(&cfg).unwrap();
    cfg.cache_scope = CacheScope::PerUser;
    let per_user = run_audit(&cfg).unwrap();
    assert_eq!(global.predictions(), per_user.predictions());
    assert!(per_user.meta.cache.misses >= global.meta.cache.misses);
}

#[test]
fn thresholds_are_echoed_in_the_run_line() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 2);
    let mut cfg = config(&paths);
    cfg.pipeline.eps_m = 25.0;
    cfg.sensitive.venue_radius_m = 20.0;
    let report = run_audit(&cfg).unwrap();
    let meta: serde_json::Value = serde_json::from_str(report.to_jsonl().lines().next().unwrap()).unwrap();
    assert_eq!(meta["pipeline"]["eps_m"], 25.0);
    assert_eq!(meta["pipeline"]["merge_m"], 50.0);
    assert_eq!(meta["pipeline"]["cache_m"], 2.0);
    assert_eq!(meta["sensitive"]["venue_radius_m"], 20.0);
    assert_eq!(meta["pipeline"]["keyloc"]["home_candidates"], 5);
    assert!(meta["tfidf_variant"].is_string());
    assert!(meta["providers"]["geocode"].is_string());
}

#[test]
fn score_ignores_user_order() {
    let dir = tempfile::tempdir().unwrap();
    let paths = corpus(dir.path(), 12);
    let mut cfg = config(&paths);
    cfg.stages.sensitive = true;
    let report = run_audit(&cfg).unwrap();
    let truth = lpaudit::audit::load_truth(&paths.truth).unwrap();
    let mut preds = report.predictions();
    let a = score(&preds, &truth).unwrap();
    preds.reverse();
    preds.rotate_left(5);
    let b = score(&preds, &truth).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.users, 12);
    assert!(a.home.precision() >= 0.9);
}

//! Scoring audit verdicts against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::normalize_address;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no ground truth for user {0:?}")]
    MissingGroundTruth(String),
    #[error("ground truth: {0}")]
    Truth(#[from] csv::Error),
    #[error("report line {line}: {message}")]
    Report { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub user_id: String,
    pub home_address: String,
    pub work_address: Option<String>,
    pub sensitive_venue_ids: BTreeSet<String>,
}

#[derive(Serialize, Deserialize)]
struct TruthRow {
    user_id: String,
    home_address: String,
    work_address: String,
    sensitive_venue_ids: String,
}

/// CSV `user_id,home_address,work_address,sensitive_venue_ids`; venue ids
/// are `|`-separated and an empty work address means no workplace.
pub fn read_ground_truth<R: Read>(r: R) -> Result<BTreeMap<String, GroundTruth>, ScoreError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for row in rdr.deserialize::<TruthRow>() {
        let row = row?;
        let work = (!row.work_address.trim().is_empty()).then_some(row.work_address);
        let venues = row.sensitive_venue_ids.split('|').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        out.insert(
            row.user_id.clone(),
            GroundTruth { user_id: row.user_id, home_address: row.home_address, work_address: work, sensitive_venue_ids: venues },
        );
    }
    Ok(out)
}

pub fn write_ground_truth<'a, W: Write>(w: W, truth: impl IntoIterator<Item = &'a GroundTruth>) -> Result<(), ScoreError> {
    let mut wtr = csv::Writer::from_writer(w);
    for t in truth {
        wtr.serialize(TruthRow {
            user_id: t.user_id.clone(),
            home_address: t.home_address.clone(),
            work_address: t.work_address.clone().unwrap_or_default(),
            sensitive_venue_ids: t.sensitive_venue_ids.iter().cloned().collect::<Vec<_>>().join("|"),
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// What the scorer needs from one user's verdicts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserPrediction {
    pub user_id: String,
    pub home: Option<String>,
    pub work: Option<String>,
    #[serde(default)]
    pub baselines: BTreeMap<String, Option<String>>,
    /// Venues backed by content evidence.
    #[serde(default)]
    pub content_venues: BTreeSet<String>,
    /// Venues backed by duration evidence.
    #[serde(default)]
    pub duration_venues: BTreeSet<String>,
}

/// Reads the `prediction` object of every user line in a report; other
/// lines are ignored.
pub fn read_predictions<R: BufRead>(r: R) -> Result<Vec<UserPrediction>, ScoreError> {
    #[derive(Deserialize)]
    struct Line {
        #[serde(default)]
        prediction: Option<UserPrediction>,
    }
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| ScoreError::Report { line: i + 1, message: e.to_string() })?;
        out.extend(parsed.prediction);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl Confusion {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Confusion { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn add_sets(&mut self, predicted: &BTreeSet<String>, truth: &BTreeSet<String>) {
        let tp = predicted.intersection(truth).count();
        self.tp += tp;
        self.fp += predicted.len() - tp;
        self.fn_ += truth.len() - tp;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RateMetric {
    pub users: usize,
    pub inferred: usize,
    pub correct: usize,
}

impl RateMetric {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.inferred)
    }

    pub fn coverage(&self) -> f64 {
        ratio(self.inferred, self.users)
    }

    fn add(&mut self, predicted: Option<&str>, truth: Option<&str>) {
        self.users += 1;
        if let Some(p) = predicted {
            self.inferred += 1;
            if truth.is_some_and(|t| normalize_address(t) == normalize_address(p)) {
                self.correct += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScoreTable {
    pub users: usize,
    pub home: RateMetric,
    pub work: RateMetric,
    /// Work restricted to users whose ground truth has a workplace.
    pub work_with_truth: RateMetric,
    pub baselines: BTreeMap<String, RateMetric>,
    pub content: Confusion,
    pub duration: Confusion,
    pub either: Confusion,
    /// Venues found by both corroboration methods.
    pub common: usize,
}

/// Baselines named H14 and H15 are scored against the workplace; all others
/// against home.
pub fn score(predictions: &[UserPrediction], truth: &BTreeMap<String, GroundTruth>) -> Result<ScoreTable, ScoreError> {
    let mut sorted: Vec<&UserPrediction> = predictions.iter().collect();
    sorted.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut t = ScoreTable::default();
    for p in sorted {
        let gt = truth.get(&p.user_id).ok_or_else(|| ScoreError::MissingGroundTruth(p.user_id.clone()))?;
        t.users += 1;
        t.home.add(p.home.as_deref(), Some(&gt.home_address));
        t.work.add(p.work.as_deref(), gt.work_address.as_deref());
        if gt.work_address.is_some() {
            t.work_with_truth.add(p.work.as_deref(), gt.work_address.as_deref());
        }
        for (h, pred) in &p.baselines {
            let target = if matches!(h.as_str(), "H14" | "H15") { gt.work_address.as_deref() } else { Some(gt.home_address.as_str()) };
            t.baselines.entry(h.clone()).or_default().add(pred.as_deref(), target);
        }
        t.content.add_sets(&p.content_venues, &gt.sensitive_venue_ids);
        t.duration.add_sets(&p.duration_venues, &gt.sensitive_venue_ids);
        let either: BTreeSet<String> = p.content_venues.union(&p.duration_venues).cloned().collect();
        t.either.add_sets(&either, &gt.sensitive_venue_ids);
        t.common += p.content_venues.intersection(&p.duration_venues).count();
    }
    Ok(t)
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

impl fmt::Display for ScoreTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users: {}", self.users)?;
        let rate = |f: &mut fmt::Formatter<'_>, name: &str, m: &RateMetric| {
            writeln!(
                f,
                "{name:<10} precision {:>8} ({}/{})  coverage {:>8} ({}/{})",
                pct(m.precision()),
                m.correct,
                m.inferred,
                pct(m.coverage()),
                m.inferred,
                m.users
            )
        };
        rate(f, "home", &self.home)?;
        rate(f, "work", &self.work)?;
        rate(f, "work*", &self.work_with_truth)?;
        for (h, m) in &self.baselines {
            rate(f, h, m)?;
        }
        for (name, c) in [("content", &self.content), ("duration", &self.duration), ("either", &self.either)] {
            writeln!(
                f,
                "{name:<10} precision {:>8}  recall {:>8}  f1 {:.4}  (tp {} fp {} fn {})",
                pct(c.precision()),
                pct(c.recall()),
                c.f1(),
                c.tp,
                c.fp,
                c.fn_
            )?;
        }
        writeln!(f, "common content/duration venues: {}", self.common)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt(user: &str, home: &str, work: Option<&str>, venues: &[&str]) -> GroundTruth {
        GroundTruth {
            user_id: user.into(),
            home_address: home.into(),
            work_address: work.map(String::from),
            sensitive_venue_ids: venues.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn pred(user: &str, home: Option<&str>) -> UserPrediction {
        UserPrediction { user_id: user.into(), home: home.map(String::from), ..Default::default() }
    }

    #[test]
    fn precision_and_coverage() {
        let truth: BTreeMap<String, GroundTruth> =
            (0..10).map(|i| (format!("u{i}"), gt(&format!("u{i}"), &format!("{i} Main St"), None, &[]))).collect();
        let preds: Vec<UserPrediction> = (0..10)
            .map(|i| pred(&format!("u{i}"), (i < 9).then(|| format!("{i}  MAIN st")).as_deref()))
            .collect();
        let t = score(&preds, &truth).unwrap();
        assert_eq!(t.home.precision(), 1.0);
        assert_eq!(t.home.coverage(), 0.9);
    }

    #[test]
    fn content_corroboration_confusion_fixture() {
        let c = Confusion::new(368, 96, 25);
        assert!((100.0 * c.precision() - 79.31).abs() < 0.01);
        assert!((100.0 * c.recall() - 93.63).abs() < 0.01);
    }

    #[test]
    fn missing_truth_is_an_error() {
        let err = score(&[pred("ghost", None)], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ScoreError::MissingGroundTruth(u) if u == "ghost"));
    }

    #[test]
    fn sensitive_sets_and_baselines() {
        let truth = BTreeMap::from([("a".to_string(), gt("a", "h", Some("w"), &["v1", "v2"]))]);
        let p = UserPrediction {
            user_id: "a".into(),
            home: Some("h".into()),
            work: Some("x".into()),
            baselines: BTreeMap::from([("H1".into(), Some("h".into())), ("H15".into(), Some("w".into()))]),
            content_venues: ["v1", "v3"].map(String::from).into(),
            duration_venues: ["v1"].map(String::from).into(),
        };
        let t = score(&[p], &truth).unwrap();
        assert_eq!(t.content, Confusion::new(1, 1, 1));
        assert_eq!(t.duration, Confusion::new(1, 0, 1));
        assert_eq!(t.either, Confusion::new(1, 1, 1));
        assert_eq!(t.common, 1);
        assert_eq!(t.work.correct, 0);
        assert_eq!(t.baselines["H1"].correct, 1);
        assert_eq!(t.baselines["H15"].correct, 1);
    }

    #[test]
    fn truth_csv_round_trip() {
        let rows = vec![gt("a", "1 Elm St, Town", Some("2 Oak"), &["v1", "v2"]), gt("b", "3 Pine", None, &[])];
        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &rows).unwrap();
        let back = read_ground_truth(buf.as_slice()).unwrap();
        assert_eq!(back.values().cloned().collect::<Vec<_>>(), rows);
    }

    #[test]
    fn predictions_from_report_lines() {
        let text = "{\"kind\":\"run\",\"seed\":1}\n{\"kind\":\"user\",\"prediction\":{\"user_id\":\"a\",\"home\":\"h\",\"work\":null}}\n";
        let p = read_predictions(text.as_bytes()).unwrap();
        assert_eq!(p, vec![pred("a", Some("h"))]);
    }

    proptest! {
        #[test]
        fn order_does_not_matter(n in 1usize..20, rot in 0usize..20, seed in any::<u64>()) {
            let truth: BTreeMap<String, GroundTruth> =
                (0..n).map(|i| (format!("u{i}"), gt(&format!("u{i}"), "home", None, &["v"]))).collect();
            let preds: Vec<UserPrediction> = (0..n).map(|i| {
                let mut p = pred(&format!("u{i}"), ((seed >> (i % 64)) & 1 == 1).then_some("home"));
                if (seed >> ((i + 7) % 64)) & 1 == 1 { p.content_venues.insert("v".into()); }
                p
            }).collect();
            let mut rotated = preds.clone();
            rotated.rotate_left(rot % n);
            prop_assert_eq!(score(&preds, &truth).unwrap(), score(&rotated, &truth).unwrap());
        }
    }
}

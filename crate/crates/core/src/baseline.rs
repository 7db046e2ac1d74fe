//! Prior-work home/work heuristics evaluated on the same clusters, for
//! comparison with the temporal-profile approach in [`crate::keyloc`].
//!
//! All hour windows are closed integer hour bins in cluster-local time and
//! may wrap past midnight. Unless a rule says otherwise, ties between clusters
//! go to the larger cluster, then to the lower id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::ClusterId;
use crate::geo::{haversine_distance, GeoPoint};
use crate::keyloc::AnalyzedCluster;
use crate::temporal::{HourSet, LocalizedPost};

pub const PAGERANK_DAMPING: f64 = 0.85;
pub const PAGERANK_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("unknown heuristic {0:?}")]
    UnknownHeuristic(String),
    #[error("heuristic {0} needs an hour-weight table")]
    MissingWeights(HeuristicId),
    #[error("weight training sample is empty")]
    EmptySample,
    #[error("weight table: {0}")]
    WeightTable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum HeuristicId {
    H1LargestCluster,
    H2Night20to8,
    H3Night24to7,
    H4LastDestBefore3am,
    H5LastDestNoNightDays,
    H6PageRankDest,
    H7PageRankOrig,
    H8RestLeisureDays,
    H9Wmfv,
    H10WMean,
    H11WMedian,
    H14ActiveFrameWork,
    H15SecondLargest,
}

impl HeuristicId {
    pub const ALL: [HeuristicId; 13] = [
        HeuristicId::H1LargestCluster,
        HeuristicId::H2Night20to8,
        HeuristicId::H3Night24to7,
        HeuristicId::H4LastDestBefore3am,
        HeuristicId::H5LastDestNoNightDays,
        HeuristicId::H6PageRankDest,
        HeuristicId::H7PageRankOrig,
        HeuristicId::H8RestLeisureDays,
        HeuristicId::H9Wmfv,
        HeuristicId::H10WMean,
        HeuristicId::H11WMedian,
        HeuristicId::H14ActiveFrameWork,
        HeuristicId::H15SecondLargest,
    ];

    pub fn number(&self) -> u8 {
        match self {
            HeuristicId::H1LargestCluster => 1,
            HeuristicId::H2Night20to8 => 2,
            HeuristicId::H3Night24to7 => 3,
            HeuristicId::H4LastDestBefore3am => 4,
            HeuristicId::H5LastDestNoNightDays => 5,
            HeuristicId::H6PageRankDest => 6,
            HeuristicId::H7PageRankOrig => 7,
            HeuristicId::H8RestLeisureDays => 8,
            HeuristicId::H9Wmfv => 9,
            HeuristicId::H10WMean => 10,
            HeuristicId::H11WMedian => 11,
            HeuristicId::H14ActiveFrameWork => 14,
            HeuristicId::H15SecondLargest => 15,
        }
    }

    /// Whether the heuristic targets the workplace rather than home.
    pub fn is_work(&self) -> bool {
        matches!(self, HeuristicId::H14ActiveFrameWork | HeuristicId::H15SecondLargest)
    }

    pub fn needs_weights(&self) -> bool {
        matches!(self, HeuristicId::H9Wmfv | HeuristicId::H10WMean | HeuristicId::H11WMedian)
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}", self.number())
    }
}

impl From<HeuristicId> for String {
    fn from(h: HeuristicId) -> String {
        h.to_string()
    }
}

impl TryFrom<String> for HeuristicId {
    type Error = BaselineError;
    fn try_from(s: String) -> Result<Self, BaselineError> {
        s.parse()
    }
}

impl FromStr for HeuristicId {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, BaselineError> {
        let t = s.trim();
        let num = t.strip_prefix('H').or_else(|| t.strip_prefix('h')).unwrap_or(t);
        HeuristicId::ALL
            .into_iter()
            .find(|h| num.parse::<u8>().ok() == Some(h.number()))
            .ok_or_else(|| BaselineError::UnknownHeuristic(s.to_string()))
    }
}

/// Per-hour weights for the weighted estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourWeights(pub [f64; 24]);

impl HourWeights {
    pub fn uniform() -> Self {
        HourWeights([1.0; 24])
    }

    pub fn get(&self, hour: u32) -> f64 {
        self.0[hour as usize % 24]
    }

    /// 24 lines of `hour,weight`; an optional `hour,weight` header is skipped.
    pub fn parse(text: &str) -> Result<Self, BaselineError> {
        let mut w = [f64::NAN; 24];
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if line.starts_with("hour") {
                continue;
            }
            let (h, v) = line
                .split_once(',')
                .ok_or_else(|| BaselineError::WeightTable(format!("bad line {line:?}")))?;
            let h: usize = h.trim().parse().map_err(|_| BaselineError::WeightTable(format!("bad hour {h:?}")))?;
            let v: f64 = v.trim().parse().map_err(|_| BaselineError::WeightTable(format!("bad weight {v:?}")))?;
            if h >= 24 || !v.is_finite() || v < 0.0 {
                return Err(BaselineError::WeightTable(format!("out of range: {line:?}")));
            }
            w[h] = v;
        }
        if let Some(h) = w.iter().position(|v| v.is_nan()) {
            return Err(BaselineError::WeightTable(format!("missing hour {h}")));
        }
        Ok(HourWeights(w))
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let text = fs::read_to_string(path).map_err(|e| BaselineError::WeightTable(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn to_csv(&self) -> String {
        self.0.iter().enumerate().map(|(h, w)| format!("{h},{w}\n")).collect()
    }
}

/// One training user: analyzed clusters plus the known home cluster.
pub struct LabeledUser<'a> {
    pub clusters: &'a [AnalyzedCluster],
    pub home: ClusterId,
}

/// Fraction of sample posts at each local hour that come from the poster's
/// home cluster. Hours without posts get weight 0.
pub fn train_hour_weights(sample: &[LabeledUser<'_>]) -> Result<HourWeights, BaselineError> {
    let mut home = [0usize; 24];
    let mut total = [0usize; 24];
    for user in sample {
        for c in user.clusters {
            for p in &c.posts {
                total[p.local_hour as usize] += 1;
                if c.id == user.home {
                    home[p.local_hour as usize] += 1;
                }
            }
        }
    }
    if total.iter().all(|&n| n == 0) {
        return Err(BaselineError::EmptySample);
    }
    let mut w = [0.0; 24];
    for h in 0..24 {
        if total[h] > 0 {
            w[h] = home[h] as f64 / total[h] as f64;
        }
    }
    Ok(HourWeights(w))
}

/// What a baseline sees of one user.
pub struct BaselineInput<'a> {
    pub clusters: &'a [AnalyzedCluster],
    pub midpoints: &'a HashMap<ClusterId, GeoPoint>,
    pub coords: &'a HashMap<String, GeoPoint>,
    pub weights: Option<&'a HourWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    Wmfv,
    WMean,
    WMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Rank the transition graph as built (destinations accumulate mass).
    Destination,
    /// Rank the edge-reversed graph (origins accumulate mass).
    Origin,
}

fn by_size_then_id(clusters: &[AnalyzedCluster]) -> Vec<&AnalyzedCluster> {
    let mut v: Vec<&AnalyzedCluster> = clusters.iter().collect();
    v.sort_by(|a, b| b.size.cmp(&a.size).then(a.id.cmp(&b.id)));
    v
}

/// Highest positive score, ties to larger then lower-id cluster.
fn argmax_score<F: Fn(&AnalyzedCluster) -> f64>(clusters: &[AnalyzedCluster], score: F) -> Option<ClusterId> {
    let mut best: Option<(ClusterId, f64)> = None;
    for c in by_size_then_id(clusters) {
        let s = score(c);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((c.id, s));
        }
    }
    best.map(|(id, _)| id)
}

fn count_in_window(c: &AnalyzedCluster, window: HourSet) -> f64 {
    c.posts.iter().filter(|p| window.contains(p.local_hour)).count() as f64
}

/// Local date after shifting the clock back by `hours`.
fn shifted_date(p: &LocalizedPost, hours: i64) -> NaiveDate {
    DateTime::from_timestamp(p.local - hours * 3600, 0)
        .map(|d| d.date_naive())
        .unwrap_or(p.local_date)
}

fn unique_days_in_window(c: &AnalyzedCluster, window: HourSet, day_shift_hours: i64) -> f64 {
    c.posts
        .iter()
        .filter(|p| window.contains(p.local_hour))
        .map(|p| shifted_date(p, day_shift_hours))
        .collect::<BTreeSet<_>>()
        .len() as f64
}

fn all_posts(clusters: &[AnalyzedCluster]) -> Vec<(ClusterId, &LocalizedPost)> {
    let mut v: Vec<(ClusterId, &LocalizedPost)> =
        clusters.iter().flat_map(|c| c.posts.iter().map(move |p| (c.id, p))).collect();
    v.sort_by(|a, b| a.1.utc.cmp(&b.1.utc).then_with(|| a.1.post_id.cmp(&b.1.post_id)));
    v
}

/// Last destination of the day, with days running 03:00 to 02:59. When
/// `skip_night_days` is set, days with any post between 00:00 and 06:59 are
/// ignored.
fn last_destination(clusters: &[AnalyzedCluster], skip_night_days: bool) -> Option<ClusterId> {
    let night = HourSet::span(0, 6);
    let mut days: BTreeMap<NaiveDate, Vec<(ClusterId, &LocalizedPost)>> = BTreeMap::new();
    for (id, p) in all_posts(clusters) {
        days.entry(shifted_date(p, 3)).or_default().push((id, p));
    }
    let mut votes: HashMap<ClusterId, usize> = HashMap::new();
    for posts in days.values() {
        if skip_night_days && posts.iter().any(|(_, p)| night.contains(p.local_hour)) {
            continue;
        }
        let (id, _) = posts.last().expect("non-empty day");
        *votes.entry(*id).or_default() += 1;
    }
    argmax_score(clusters, |c| votes.get(&c.id).copied().unwrap_or(0) as f64)
}

/// Same-day consecutive-post transitions between distinct clusters.
pub fn transition_graph(clusters: &[AnalyzedCluster]) -> BTreeMap<(ClusterId, ClusterId), f64> {
    let mut edges = BTreeMap::new();
    let posts = all_posts(clusters);
    for pair in posts.windows(2) {
        let (a, pa) = pair[0];
        let (b, pb) = pair[1];
        if a != b && pa.local_date == pb.local_date {
            *edges.entry((a, b)).or_insert(0.0) += 1.0;
        }
    }
    edges
}

/// Damped weighted PageRank with uniform teleport; dangling mass is spread
/// uniformly. Returns one score per node, in `nodes` order.
pub fn weighted_pagerank(
    nodes: &[ClusterId],
    edges: &BTreeMap<(ClusterId, ClusterId), f64>,
    mode: RankMode,
    damping: f64,
    iterations: usize,
) -> Vec<f64> {
    let n = nodes.len();
    if n == 0 {
        return Vec::new();
    }
    let index: HashMap<ClusterId, usize> = nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut out_edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(u, v), &w) in edges {
        let (src, dst) = match mode {
            RankMode::Destination => (u, v),
            RankMode::Origin => (v, u),
        };
        if let (Some(&s), Some(&d)) = (index.get(&src), index.get(&dst)) {
            out_edges[s].push((d, w));
        }
    }
    let out_weight: Vec<f64> = out_edges.iter().map(|e| e.iter().map(|x| x.1).sum()).collect();

    let uniform = 1.0 / n as f64;
    let mut rank = vec![uniform; n];
    let mut next = vec![0.0; n];
    for _ in 0..iterations {
        let dangling: f64 = (0..n).filter(|&i| out_weight[i] <= 0.0).map(|i| rank[i]).sum();
        let base = (1.0 - damping) * uniform + damping * dangling * uniform;
        next.iter_mut().for_each(|x| *x = base);
        for (i, targets) in out_edges.iter().enumerate() {
            if out_weight[i] > 0.0 {
                let share = damping * rank[i] / out_weight[i];
                for &(j, w) in targets {
                    next[j] += share * w;
                }
            }
        }
        std::mem::swap(&mut rank, &mut next);
    }
    rank
}

fn pagerank_choice(clusters: &[AnalyzedCluster], mode: RankMode) -> Option<ClusterId> {
    let edges = transition_graph(clusters);
    if edges.is_empty() {
        return None;
    }
    let mut nodes: Vec<ClusterId> = clusters.iter().map(|c| c.id).collect();
    nodes.sort_unstable();
    let ranks = weighted_pagerank(&nodes, &edges, mode, PAGERANK_DAMPING, PAGERANK_ITERATIONS);
    // exact float ties are rare; fall back to id order among near-equal ranks
    let mut best = 0;
    for i in 1..nodes.len() {
        if ranks[i] > ranks[best] + 1e-12 {
            best = i;
        }
    }
    Some(nodes[best])
}

/// Weighted estimators over posts inside `window`.
pub fn weighted_estimator(
    input: &BaselineInput<'_>,
    window: HourSet,
    weights: &HourWeights,
    mode: EstimatorMode,
) -> Option<ClusterId> {
    if mode == EstimatorMode::Wmfv {
        return argmax_score(input.clusters, |c| {
            c.posts
                .iter()
                .filter(|p| window.contains(p.local_hour))
                .map(|p| weights.get(p.local_hour))
                .sum()
        });
    }

    let mut samples: Vec<(GeoPoint, f64)> = Vec::new();
    for c in input.clusters {
        for p in c.posts.iter().filter(|p| window.contains(p.local_hour)) {
            if let Some(&pt) = input.coords.get(&p.post_id) {
                samples.push((pt, weights.get(p.local_hour)));
            }
        }
    }
    let total: f64 = samples.iter().map(|s| s.1).sum();
    if samples.is_empty() || total <= 0.0 {
        return None;
    }
    let (lat, lon) = match mode {
        EstimatorMode::WMean => (
            samples.iter().map(|(p, w)| p.lat() * w).sum::<f64>() / total,
            samples.iter().map(|(p, w)| p.lon() * w).sum::<f64>() / total,
        ),
        _ => (
            weighted_median(samples.iter().map(|(p, w)| (p.lat(), *w)).collect()),
            weighted_median(samples.iter().map(|(p, w)| (p.lon(), *w)).collect()),
        ),
    };
    let estimate = GeoPoint::new(lat, lon).ok()?;
    nearest_cluster(input, estimate)
}

/// Smallest value whose cumulative weight reaches half the total.
pub fn weighted_median(mut values: Vec<(f64, f64)>) -> f64 {
    values.retain(|v| v.1 > 0.0);
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = values.iter().map(|v| v.1).sum::<f64>() / 2.0;
    let mut acc = 0.0;
    for (v, w) in &values {
        acc += w;
        if acc >= half {
            return *v;
        }
    }
    values.last().map(|v| v.0).unwrap_or(f64::NAN)
}

fn nearest_cluster(input: &BaselineInput<'_>, p: GeoPoint) -> Option<ClusterId> {
    let mut ids: Vec<ClusterId> = input.clusters.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    ids.into_iter()
        .filter_map(|id| input.midpoints.get(&id).map(|m| (id, haversine_distance(*m, p))))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

pub fn run_baseline(h: HeuristicId, input: &BaselineInput<'_>) -> Result<Option<ClusterId>, BaselineError> {
    let clusters = input.clusters;
    let weights = || input.weights.ok_or(BaselineError::MissingWeights(h));
    Ok(match h {
        HeuristicId::H1LargestCluster => by_size_then_id(clusters).first().map(|c| c.id),
        HeuristicId::H15SecondLargest => by_size_then_id(clusters).get(1).map(|c| c.id),
        HeuristicId::H2Night20to8 => argmax_score(clusters, |c| count_in_window(c, HourSet::span(20, 7))),
        HeuristicId::H3Night24to7 => argmax_score(clusters, |c| count_in_window(c, HourSet::span(0, 6))),
        HeuristicId::H4LastDestBefore3am => last_destination(clusters, false),
        HeuristicId::H5LastDestNoNightDays => last_destination(clusters, true),
        HeuristicId::H6PageRankDest => pagerank_choice(clusters, RankMode::Destination),
        HeuristicId::H7PageRankOrig => pagerank_choice(clusters, RankMode::Origin),
        HeuristicId::H8RestLeisureDays => {
            let window = HourSet::span(2, 7).union(&HourSet::span(19, 1));
            // the leisure window runs past midnight, so days start at 02:00
            argmax_score(clusters, |c| unique_days_in_window(c, window, 2))
        }
        HeuristicId::H9Wmfv => weighted_estimator(input, HourSet::span(0, 5), weights()?, EstimatorMode::Wmfv),
        HeuristicId::H10WMean => weighted_estimator(input, HourSet::span(0, 5), weights()?, EstimatorMode::WMean),
        HeuristicId::H11WMedian => {
            weighted_estimator(input, HourSet::span(23, 5), weights()?, EstimatorMode::WMedian)
        }
        HeuristicId::H14ActiveFrameWork => argmax_score(clusters, |c| unique_days_in_window(c, HourSet::span(8, 18), 0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::tests::utc;
    use crate::temporal::ShiftRules;
    use proptest::prelude::*;

    fn cluster(id: ClusterId, slots: &[(i64, u32, u32)]) -> AnalyzedCluster {
        let base = utc(2015, 1, 5, 0, 0);
        let posts = slots
            .iter()
            .enumerate()
            .map(|(i, &(d, h, m))| {
                LocalizedPost::new(format!("c{id}-{i}"), base + d * 86_400 + i64::from(h) * 3600 + i64::from(m) * 60, 0)
                    .unwrap()
            })
            .collect();
        AnalyzedCluster::new(id, posts, &ShiftRules::default())
    }

    fn n_posts(id: ClusterId, n: usize, hour: u32) -> AnalyzedCluster {
        cluster(id, &(0..n).map(|i| (i as i64, hour, 0)).collect::<Vec<_>>())
    }

    fn run(h: HeuristicId, clusters: &[AnalyzedCluster]) -> Option<ClusterId> {
        let midpoints = HashMap::new();
        let coords = HashMap::new();
        let w = HourWeights::uniform();
        let input = BaselineInput { clusters, midpoints: &midpoints, coords: &coords, weights: Some(&w) };
        run_baseline(h, &input).unwrap()
    }

    #[test]
    fn parses_ids() {
        assert_eq!("H1".parse::<HeuristicId>().unwrap(), HeuristicId::H1LargestCluster);
        assert_eq!("h15".parse::<HeuristicId>().unwrap(), HeuristicId::H15SecondLargest);
        assert!(matches!("H12".parse::<HeuristicId>(), Err(BaselineError::UnknownHeuristic(_))));
        for h in HeuristicId::ALL {
            assert_eq!(h.to_string().parse::<HeuristicId>().unwrap(), h);
        }
    }

    #[test]
    fn largest_and_second_largest() {
        let cs = vec![n_posts(1, 25, 12), n_posts(2, 40, 12), n_posts(3, 3, 12)];
        assert_eq!(run(HeuristicId::H1LargestCluster, &cs), Some(2));
        assert_eq!(run(HeuristicId::H15SecondLargest, &cs), Some(1));
        assert_eq!(run(HeuristicId::H15SecondLargest, &cs[..1]), None);
    }

    #[test]
    fn night_window_counts() {
        let a = cluster(1, &(0..10).map(|d| (d, 21, 0)).collect::<Vec<_>>());
        let b = cluster(2, &(0..12).map(|d| (d, 5, 0)).collect::<Vec<_>>());
        assert_eq!(run(HeuristicId::H2Night20to8, &[a.clone(), b.clone()]), Some(2));
        // only b posts between midnight and 07:00
        assert_eq!(run(HeuristicId::H3Night24to7, std::slice::from_ref(&a)), None);
        assert_eq!(run(HeuristicId::H3Night24to7, &[a, b]), Some(2));
    }

    #[test]
    fn last_destination_majority() {
        // day 0 ends at A, day 1 ends at A (01:00 belongs to day 1), day 2 ends at B
        let a = cluster(1, &[(0, 22, 0), (2, 1, 0), (2, 8, 0)]);
        let b = cluster(2, &[(0, 9, 0), (1, 12, 0), (2, 20, 0)]);
        let cs = vec![a, b];
        // oracle: majority vote over the per-day last clusters [A, A, B]
        let per_day_last = [1, 1, 2];
        let mut votes: HashMap<ClusterId, usize> = HashMap::new();
        for id in per_day_last {
            *votes.entry(id).or_default() += 1;
        }
        let oracle = votes.into_iter().max_by_key(|&(id, n)| (n, std::cmp::Reverse(id))).unwrap().0;
        assert_eq!(run(HeuristicId::H4LastDestBefore3am, &cs), Some(oracle));
        // H5 skips day 1 (01:00 post) so B wins on day 0? no: day 0 last is A at 22:00
        assert_eq!(run(HeuristicId::H5LastDestNoNightDays, &cs), Some(1));
    }

    #[test]
    fn pagerank_direction() {
        let mut edges = BTreeMap::new();
        edges.insert((1, 2), 3.0);
        let dest = weighted_pagerank(&[1, 2], &edges, RankMode::Destination, 0.85, 100);
        assert!(dest[1] > dest[0]);
        let orig = weighted_pagerank(&[1, 2], &edges, RankMode::Origin, 0.85, 100);
        assert!(orig[0] > orig[1]);

        let mut sym = BTreeMap::new();
        sym.insert((1, 2), 2.0);
        sym.insert((2, 1), 2.0);
        let r = weighted_pagerank(&[1, 2], &sym, RankMode::Destination, 0.85, 100);
        assert!((r[0] - r[1]).abs() < 1e-15);
    }

    #[test]
    fn pagerank_heuristics_follow_transitions() {
        // every day: A in the morning, then B
        let a = cluster(1, &(0..5).map(|d| (d, 8, 0)).collect::<Vec<_>>());
        let b = cluster(2, &(0..5).map(|d| (d, 18, 0)).collect::<Vec<_>>());
        let cs = vec![a, b];
        assert_eq!(run(HeuristicId::H6PageRankDest, &cs), Some(2));
        assert_eq!(run(HeuristicId::H7PageRankOrig, &cs), Some(1));
        assert_eq!(run(HeuristicId::H6PageRankDest, &cs[..1]), None);
    }

    #[test]
    fn rest_leisure_and_active_days() {
        // a: 6 distinct days at 23:00; b: 4 days at 10:00 and 23:00
        let a = cluster(1, &(0..6).map(|d| (d, 23, 0)).collect::<Vec<_>>());
        let b = cluster(2, &(0..4).flat_map(|d| [(d, 10, 0), (d, 23, 30)]).collect::<Vec<_>>());
        assert_eq!(run(HeuristicId::H8RestLeisureDays, &[a.clone(), b.clone()]), Some(1));
        assert_eq!(run(HeuristicId::H14ActiveFrameWork, &[a, b]), Some(2));
    }

    #[test]
    fn leisure_after_midnight_counts_for_previous_day() {
        // 23:00 and 01:00 the next morning are the same evening
        let a = cluster(1, &[(0, 23, 0), (1, 1, 0)]);
        assert_eq!(unique_days_in_window(&a, HourSet::span(2, 7).union(&HourSet::span(19, 1)), 2), 1.0);
    }

    fn with_geo(
        clusters: &[AnalyzedCluster],
        places: &[(ClusterId, GeoPoint)],
    ) -> (HashMap<ClusterId, GeoPoint>, HashMap<String, GeoPoint>) {
        let mid: HashMap<ClusterId, GeoPoint> = places.iter().copied().collect();
        let coords = clusters
            .iter()
            .flat_map(|c| c.posts.iter().map(|p| (p.post_id.clone(), mid[&c.id])))
            .collect();
        (mid, coords)
    }

    #[test]
    fn weighted_estimators() {
        let here = GeoPoint::new(41.0, -87.0).unwrap();
        let there = here.offset_m(1000.0, 0.0);
        let a = n_posts(1, 5, 2);
        let b = n_posts(2, 2, 3);
        let cs = vec![a, b];
        let (mid, coords) = with_geo(&cs, &[(1, here), (2, there)]);
        let uniform = HourWeights::uniform();
        let input = BaselineInput { clusters: &cs, midpoints: &mid, coords: &coords, weights: Some(&uniform) };
        let win = HourSet::span(0, 5);
        assert_eq!(weighted_estimator(&input, win, &uniform, EstimatorMode::Wmfv), Some(1));
        assert_eq!(weighted_estimator(&input, win, &uniform, EstimatorMode::WMean), Some(1));
        assert_eq!(weighted_estimator(&input, win, &uniform, EstimatorMode::WMedian), Some(1));

        // weight hour 3 heavily: mean = (5*1*0 + 2*10*1000)/(5 + 20) = 800 m east, nearer b
        let mut w = [1.0; 24];
        w[3] = 10.0;
        let heavy = HourWeights(w);
        let expected_east: f64 = (2.0 * 10.0 * 1000.0) / (5.0 + 20.0);
        assert!((expected_east - 800.0).abs() < 1e-9);
        assert_eq!(weighted_estimator(&input, win, &heavy, EstimatorMode::WMean), Some(2));
        assert_eq!(weighted_estimator(&input, win, &heavy, EstimatorMode::Wmfv), Some(2));

        let nothing = weighted_estimator(&input, HourSet::span(12, 13), &uniform, EstimatorMode::WMean);
        assert_eq!(nothing, None);
    }

    #[test]
    fn single_post_all_modes_agree() {
        let here = GeoPoint::new(10.0, 10.0).unwrap();
        let cs = vec![n_posts(7, 1, 1), n_posts(8, 1, 14)];
        let (mid, coords) = with_geo(&cs, &[(7, here), (8, here.offset_m(500.0, 0.0))]);
        let w = HourWeights::uniform();
        let input = BaselineInput { clusters: &cs, midpoints: &mid, coords: &coords, weights: Some(&w) };
        for m in [EstimatorMode::Wmfv, EstimatorMode::WMean, EstimatorMode::WMedian] {
            assert_eq!(weighted_estimator(&input, HourSet::span(0, 5), &w, m), Some(7));
        }
    }

    #[test]
    fn weights_need_table() {
        let cs = vec![n_posts(1, 1, 1)];
        let (mid, coords) = (HashMap::new(), HashMap::new());
        let input = BaselineInput { clusters: &cs, midpoints: &mid, coords: &coords, weights: None };
        assert_eq!(
            run_baseline(HeuristicId::H9Wmfv, &input),
            Err(BaselineError::MissingWeights(HeuristicId::H9Wmfv))
        );
    }

    #[test]
    fn weight_training() {
        let home = n_posts(1, 8, 3);
        let other = n_posts(2, 2, 3);
        let cs = vec![home, other];
        let w = train_hour_weights(&[LabeledUser { clusters: &cs, home: 1 }]).unwrap();
        assert!((w.get(3) - 0.8).abs() < 1e-12);
        assert_eq!(w.get(4), 0.0);

        let only_home = vec![n_posts(1, 3, 3), cluster(1, &[(0, 9, 0)])];
        let w = train_hour_weights(&[LabeledUser { clusters: &only_home, home: 1 }]).unwrap();
        assert_eq!((w.get(3), w.get(9)), (1.0, 1.0));

        assert_eq!(train_hour_weights(&[]), Err(BaselineError::EmptySample));
    }

    #[test]
    fn weight_table_round_trip() {
        let mut w = [0.0; 24];
        for (h, x) in w.iter_mut().enumerate() {
            *x = h as f64 / 23.0;
        }
        let t = HourWeights(w);
        assert_eq!(HourWeights::parse(&t.to_csv()).unwrap(), t);
        assert!(HourWeights::parse("0,1\n").is_err());
    }

    #[test]
    fn weighted_median_examples() {
        assert_eq!(weighted_median(vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]), 2.0);
        assert_eq!(weighted_median(vec![(1.0, 1.0), (2.0, 1.0), (3.0, 5.0)]), 3.0);
    }

    fn arb_graph() -> impl Strategy<Value = (usize, BTreeMap<(ClusterId, ClusterId), f64>)> {
        (2usize..8).prop_flat_map(|n| {
            let edge = (0..n as u32, 0..n as u32, 1u32..5);
            (Just(n), proptest::collection::vec(edge, 0..20)).prop_map(|(n, es)| {
                let mut m = BTreeMap::new();
                for (a, b, w) in es {
                    if a != b {
                        *m.entry((a, b)).or_insert(0.0) += f64::from(w);
                    }
                }
                (n, m)
            })
        })
    }

    proptest! {
        #[test]
        fn pagerank_is_a_distribution_at_a_fixed_point((n, edges) in arb_graph(), orig in any::<bool>()) {
            let nodes: Vec<ClusterId> = (0..n as u32).collect();
            let mode = if orig { RankMode::Origin } else { RankMode::Destination };
            let r = weighted_pagerank(&nodes, &edges, mode, PAGERANK_DAMPING, PAGERANK_ITERATIONS);
            let sum: f64 = r.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let r2 = weighted_pagerank(&nodes, &edges, mode, PAGERANK_DAMPING, PAGERANK_ITERATIONS + 1);
            for (a, b) in r.iter().zip(&r2) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn window_counts_match_naive_filter(hours in proptest::collection::vec(0u32..24, 1..40)) {
            let slots: Vec<(i64, u32, u32)> = hours.iter().enumerate().map(|(i, &h)| (i as i64 / 3, h, 0)).collect();
            let c = cluster(1, &slots);
            let naive = |lo: &[u32]| hours.iter().filter(|h| lo.contains(h)).count() as f64;
            prop_assert_eq!(count_in_window(&c, HourSet::span(20, 7)), naive(&[20, 21, 22, 23, 0, 1, 2, 3, 4, 5, 6, 7]));
            prop_assert_eq!(count_in_window(&c, HourSet::span(0, 6)), naive(&[0, 1, 2, 3, 4, 5, 6]));
            let active_days: BTreeSet<i64> = slots.iter().filter(|s| (8..=18).contains(&s.1)).map(|s| s.0).collect();
            prop_assert_eq!(unique_days_in_window(&c, HourSet::span(8, 18), 0), active_days.len() as f64);
        }
    }
}

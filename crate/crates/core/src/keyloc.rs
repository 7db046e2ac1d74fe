//! Home and workplace inference from per-cluster temporal profiles.
//!
//! Home: among the clusters active on the most distinct weekends, the one
//! whose posts cover the most distinct hours of the day. Work: among the
//! non-home clusters active in the most distinct weeks, drop clusters with no
//! dominant daily frame or with too many overlong days, keep only posts inside
//! the dominant frame, and pick the cluster active in the most weeks.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterId;
use crate::temporal::{active_week_count, HourSet, LocalizedPost, ShiftRules, TimeProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyLocConfig {
    pub home_candidates: usize,
    pub work_candidates: usize,
    /// A day frame longer than this counts as an overlong day.
    pub long_day_minutes: i64,
    /// Work candidates with a larger share of overlong days are dropped.
    pub max_long_day_fraction: f64,
    pub shift: ShiftRules,
}

impl Default for KeyLocConfig {
    fn default() -> Self {
        KeyLocConfig {
            home_candidates: 5,
            work_candidates: 5,
            long_day_minutes: 10 * 60,
            max_long_day_fraction: 0.2,
            shift: ShiftRules::default(),
        }
    }
}

/// A cluster with its localized posts and temporal profile.
#[derive(Debug, Clone)]
pub struct AnalyzedCluster {
    pub id: ClusterId,
    pub size: usize,
    pub posts: Vec<LocalizedPost>,
    pub profile: TimeProfile,
}

impl AnalyzedCluster {
    pub fn new(id: ClusterId, posts: Vec<LocalizedPost>, shift: &ShiftRules) -> Self {
        let profile = TimeProfile::build(&posts, shift);
        AnalyzedCluster { id, size: posts.len(), posts, profile }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomeCandidate {
    pub cluster_id: ClusterId,
    pub active_weekends: usize,
    pub hour_breadth: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkExclusion {
    NoDominantFrame,
    LongDays { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkCandidate {
    pub cluster_id: ClusterId,
    pub active_weeks: usize,
    pub dominant_frame: HourSet,
    pub long_day_fraction: f64,
    /// Active weeks counting only posts inside the dominant frame.
    pub framed_weeks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excluded: Option<WorkExclusion>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KeyLocationResult {
    pub home: Option<ClusterId>,
    pub work: Option<ClusterId>,
    pub home_candidates: Vec<HomeCandidate>,
    pub work_candidates: Vec<WorkCandidate>,
    pub diagnostics: Vec<String>,
}

// Deterministic secondary order: larger clusters first, then lower id.
fn size_then_id(a: &AnalyzedCluster, b: &AnalyzedCluster) -> std::cmp::Ordering {
    b.size.cmp(&a.size).then(a.id.cmp(&b.id))
}

pub fn home_candidates(clusters: &[AnalyzedCluster], cfg: &KeyLocConfig) -> Vec<HomeCandidate> {
    let mut ranked: Vec<&AnalyzedCluster> = clusters.iter().collect();
    ranked.sort_by(|a, b| {
        b.profile
            .active_weekend_count
            .cmp(&a.profile.active_weekend_count)
            .then_with(|| size_then_id(a, b))
    });
    ranked
        .into_iter()
        .take(cfg.home_candidates)
        .filter(|c| c.profile.active_weekend_count > 0)
        .map(|c| HomeCandidate {
            cluster_id: c.id,
            active_weekends: c.profile.active_weekend_count,
            hour_breadth: c.profile.hour_breadth,
        })
        .collect()
}

/// The candidate with the broadest hour coverage, or `None` when no cluster
/// has weekend activity.
pub fn infer_home(clusters: &[AnalyzedCluster], cfg: &KeyLocConfig) -> (Option<ClusterId>, Vec<HomeCandidate>) {
    let candidates = home_candidates(clusters, cfg);
    let by_id = |id: ClusterId| clusters.iter().find(|c| c.id == id).expect("candidate exists");
    let winner = candidates
        .iter()
        .min_by(|a, b| {
            b.hour_breadth
                .cmp(&a.hour_breadth)
                .then_with(|| size_then_id(by_id(a.cluster_id), by_id(b.cluster_id)))
        })
        .map(|c| c.cluster_id);
    (winner, candidates)
}

fn evaluate_work_candidate(c: &AnalyzedCluster, cfg: &KeyLocConfig) -> WorkCandidate {
    let frames = &c.profile.day_frames;
    let dominant = c.profile.dominant_frame;
    let long_days = frames.iter().filter(|f| f.duration_minutes() > cfg.long_day_minutes).count();
    let long_day_fraction = if frames.is_empty() { 0.0 } else { long_days as f64 / frames.len() as f64 };
    let framed_weeks = active_week_count(c.posts.iter().filter(|p| dominant.contains(p.local_hour)));
    let excluded = if dominant.is_empty() {
        Some(WorkExclusion::NoDominantFrame)
    } else if long_day_fraction > cfg.max_long_day_fraction {
        Some(WorkExclusion::LongDays { fraction: long_day_fraction })
    } else {
        None
    };
    WorkCandidate {
        cluster_id: c.id,
        active_weeks: c.profile.active_week_count,
        dominant_frame: dominant,
        long_day_fraction,
        framed_weeks,
        excluded,
    }
}

pub fn infer_work(
    clusters: &[AnalyzedCluster],
    home: Option<ClusterId>,
    cfg: &KeyLocConfig,
) -> (Option<ClusterId>, Vec<WorkCandidate>) {
    let mut ranked: Vec<&AnalyzedCluster> = clusters.iter().filter(|c| Some(c.id) != home).collect();
    ranked.sort_by(|a, b| {
        b.profile
            .active_week_count
            .cmp(&a.profile.active_week_count)
            .then_with(|| size_then_id(a, b))
    });
    ranked.truncate(cfg.work_candidates);

    let evaluated: Vec<(&AnalyzedCluster, WorkCandidate)> =
        ranked.into_iter().map(|c| (c, evaluate_work_candidate(c, cfg))).collect();
    let winner = evaluated
        .iter()
        .filter(|(_, w)| w.excluded.is_none())
        .min_by(|(ca, wa), (cb, wb)| wb.framed_weeks.cmp(&wa.framed_weeks).then_with(|| size_then_id(ca, cb)))
        .map(|(c, _)| c.id);
    (winner, evaluated.into_iter().map(|(_, w)| w).collect())
}

pub fn infer_key_locations(clusters: &[AnalyzedCluster], cfg: &KeyLocConfig) -> KeyLocationResult {
    let mut diagnostics = Vec::new();
    let (home, home_candidates) = infer_home(clusters, cfg);
    if home.is_none() {
        diagnostics.push("no cluster with weekend activity; home not inferred".to_string());
    }
    let (work, work_candidates) = infer_work(clusters, home, cfg);
    if work.is_none() {
        diagnostics.push("no work candidate survived filtering".to_string());
    }
    KeyLocationResult { home, work, home_candidates, work_candidates, diagnostics }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::tests::utc;
    use crate::temporal::LocalizedPost;

    /// Posts at the given (day offset from Monday 2015-01-05, hour, minute).
    fn cluster(id: ClusterId, slots: &[(i64, u32, u32)]) -> AnalyzedCluster {
        let base = utc(2015, 1, 5, 0, 0);
        let posts: Vec<LocalizedPost> = slots
            .iter()
            .enumerate()
            .map(|(i, &(d, h, m))| {
                LocalizedPost::new(format!("c{id}-{i}"), base + d * 86_400 + i64::from(h) * 3600 + i64::from(m) * 60, 0)
                    .unwrap()
            })
            .collect();
        AnalyzedCluster::new(id, posts, &ShiftRules::default())
    }

    fn weekend_slots(weekends: i64, hours: &[u32]) -> Vec<(i64, u32, u32)> {
        let mut v = Vec::new();
        for w in 0..weekends {
            for (k, &h) in hours.iter().enumerate() {
                // alternate Saturday / Sunday
                v.push((w * 7 + 5 + (k as i64 % 2), h, 0));
            }
        }
        v
    }

    #[test]
    fn home_prefers_breadth_over_weekends() {
        let broad: Vec<u32> = (4..23).collect(); // 19 hours
        let a = cluster(1, &weekend_slots(10, &broad));
        let b = cluster(2, &weekend_slots(12, &[10, 11, 12, 13, 14, 15, 16, 17, 18]));
        assert_eq!(a.profile.hour_breadth, 19);
        assert_eq!(b.profile.active_weekend_count, 12);
        let (home, cands) = infer_home(&[b, a], &KeyLocConfig::default());
        assert_eq!(home, Some(1));
        assert_eq!(cands.len(), 2);
    }

    #[test]
    fn single_weekend_post_is_home() {
        let c = cluster(4, &[(5, 12, 0)]);
        assert_eq!(infer_home(&[c], &KeyLocConfig::default()).0, Some(4));
    }

    #[test]
    fn weekday_only_user_has_no_home() {
        let slots: Vec<(i64, u32, u32)> = (0..4).flat_map(|w| (0..5).map(move |d| (w * 7 + d, 9, 0))).collect();
        let c = cluster(1, &slots);
        // direct count: every post falls Monday..Friday
        assert!(c.posts.iter().all(|p| !p.is_weekend()));
        assert_eq!(infer_home(&[c], &KeyLocConfig::default()).0, None);
    }

    #[test]
    fn top_window_taken_before_zero_filter() {
        let cfg = KeyLocConfig { home_candidates: 1, ..KeyLocConfig::default() };
        // only the larger cluster enters the window, and it has weekends
        let a = cluster(1, &[(5, 10, 0), (5, 11, 0)]);
        let b = cluster(2, &[(5, 3, 0)]);
        assert_eq!(infer_home(&[a, b], &cfg).0, Some(1));
    }

    fn workdays(weeks: i64, start: (u32, u32), end: (u32, u32)) -> Vec<(i64, u32, u32)> {
        let mut v = Vec::new();
        for w in 0..weeks {
            for d in 0..5 {
                v.push((w * 7 + d, start.0, start.1));
                v.push((w * 7 + d, end.0, end.1));
            }
        }
        v
    }

    #[test]
    fn work_prefers_more_active_weeks() {
        let office = cluster(2, &workdays(8, (8, 0), (16, 0)));
        let gym = cluster(3, &workdays(4, (19, 0), (21, 0)));
        let (work, cands) = infer_work(&[office, gym], None, &KeyLocConfig::default());
        assert_eq!(work, Some(2));
        assert_eq!(cands[0].dominant_frame, HourSet::span(8, 16));
        assert_eq!(cands[0].framed_weeks, 8);
    }

    #[test]
    fn work_drops_overlong_days() {
        // 10 days, 3 of them 11 h long
        let mut slots = Vec::new();
        for d in 0..10 {
            let end = if d < 3 { 19 } else { 16 };
            slots.push((d, 8, 0));
            slots.push((d, end, 0));
        }
        let c = cluster(5, &slots);
        let (work, cands) = infer_work(&[c], None, &KeyLocConfig::default());
        assert_eq!(work, None);
        assert!(matches!(cands[0].excluded, Some(WorkExclusion::LongDays { fraction }) if (fraction - 0.3).abs() < 1e-12));
    }

    #[test]
    fn work_allows_occasional_overtime() {
        let mut slots = Vec::new();
        for d in 0..10 {
            let end = if d < 2 { 19 } else { 16 };
            slots.push((d, 8, 0));
            slots.push((d, end, 0));
        }
        let (work, _) = infer_work(&[cluster(5, &slots)], None, &KeyLocConfig::default());
        assert_eq!(work, Some(5));
    }

    #[test]
    fn only_home_means_no_work() {
        let home = cluster(1, &weekend_slots(4, &[8, 20]));
        let (work, cands) = infer_work(&[home], Some(1), &KeyLocConfig::default());
        assert_eq!(work, None);
        assert!(cands.is_empty());
    }

    #[test]
    fn night_shift_worker_keeps_work() {
        let mut slots = Vec::new();
        for w in 0..6 {
            for d in 0..4 {
                slots.push((w * 7 + d, 23, 5));
                slots.push((w * 7 + d + 1, 3, 0));
                slots.push((w * 7 + d + 1, 6, 40));
            }
        }
        let c = cluster(9, &slots);
        let (work, cands) = infer_work(&[c], None, &KeyLocConfig::default());
        assert_eq!(work, Some(9));
        assert_eq!(cands[0].dominant_frame, HourSet::span(23, 6));
    }

    #[test]
    fn duplicating_posts_keeps_choices() {
        let broad: Vec<u32> = (4..23).collect();
        let base = [
            weekend_slots(10, &broad),
            weekend_slots(12, &[10]),
            workdays(8, (8, 0), (16, 0)),
            workdays(6, (9, 0), (12, 0)),
        ];
        let build = |k: usize| -> Vec<AnalyzedCluster> {
            base.iter()
                .enumerate()
                .map(|(i, s)| {
                    let dup: Vec<_> = s.iter().flat_map(|x| std::iter::repeat_n(*x, k)).collect();
                    cluster(i as ClusterId, &dup)
                })
                .collect()
        };
        let cfg = KeyLocConfig::default();
        let r1 = infer_key_locations(&build(1), &cfg);
        for k in [2, 5] {
            let rk = infer_key_locations(&build(k), &cfg);
            assert_eq!((rk.home, rk.work), (r1.home, r1.work));
        }
        assert_eq!((r1.home, r1.work), (Some(0), Some(2)));
    }
}

//! Coarse-geotag GPS leakage accounting around the official apps' policy
//! change, and key-location inference restricted to post-change data.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geo::AddressLabel;
use crate::model::{GeotagKind, PostRecord, SourceApp};
use crate::pipeline::{run_key_locations, GeoContext, KeyLocRun, PipelineConfig};

const WEEK_SECONDS: i64 = 7 * 86_400;

fn midnight_utc(y: i32, m: u32, d: u32) -> i64 {
    NaiveDate::from_ymd_opt(y, m, d)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc().timestamp())
        .expect("valid calendar date")
}

/// Coarse posts before this instant mostly carried coordinates as well.
pub fn coarse_gps_era_start() -> i64 {
    midnight_utc(2010, 8, 1)
}

/// Per-source instants after which coarse-tagged posts stopped carrying
/// coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyCutoffs(pub BTreeMap<SourceApp, i64>);

impl Default for PolicyCutoffs {
    fn default() -> Self {
        PolicyCutoffs(BTreeMap::from([
            (SourceApp::IOSOfficial, midnight_utc(2015, 4, 15)),
            (SourceApp::AndroidOfficial, midnight_utc(2015, 4, 20)),
        ]))
    }
}

impl PolicyCutoffs {
    pub fn get(&self, source: SourceApp) -> Option<i64> {
        self.0.get(&source).copied()
    }

    /// For sources without their own cutoff the latest configured cutoff
    /// applies, so the filtered data never predates any official change.
    pub fn effective(&self, source: SourceApp) -> Option<i64> {
        self.get(source).or_else(|| self.0.values().copied().max())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCounts {
    pub total: usize,
    pub with_coords: usize,
    pub coarse: usize,
    pub coarse_with_coords: usize,
}

impl PeriodCounts {
    fn add(&mut self, p: &PostRecord) {
        let coarse = p.geotag_kind == GeotagKind::CoarsePlace;
        self.total += 1;
        self.with_coords += usize::from(p.coords.is_some());
        self.coarse += usize::from(coarse);
        self.coarse_with_coords += usize::from(coarse && p.coords.is_some());
    }

    pub fn merge(&mut self, o: &PeriodCounts) {
        self.total += o.total;
        self.with_coords += o.with_coords;
        self.coarse += o.coarse;
        self.coarse_with_coords += o.coarse_with_coords;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageStats {
    pub pre_cutoff: PeriodCounts,
    pub post_cutoff: PeriodCounts,
    /// Coarse posts without coordinates from before the coarse-GPS era.
    /// These are also counted in `pre_cutoff`.
    pub coarse_no_gps_pre2010: usize,
}

impl LeakageStats {
    pub fn merge(&mut self, o: &LeakageStats) {
        self.pre_cutoff.merge(&o.pre_cutoff);
        self.post_cutoff.merge(&o.post_cutoff);
        self.coarse_no_gps_pre2010 += o.coarse_no_gps_pre2010;
    }
}

/// Posts strictly before their source's cutoff are pre-period; posts from
/// sources without a cutoff are post-period.
pub fn leakage_stats<'a>(posts: impl IntoIterator<Item = &'a PostRecord>, cutoffs: &PolicyCutoffs) -> LeakageStats {
    let era = coarse_gps_era_start();
    let mut s = LeakageStats::default();
    for p in posts {
        let pre = cutoffs.get(p.source_app).is_some_and(|c| p.timestamp_utc < c);
        if pre {
            s.pre_cutoff.add(p);
        } else {
            s.post_cutoff.add(p);
        }
        if p.geotag_kind == GeotagKind::CoarsePlace && p.coords.is_none() && p.timestamp_utc < era {
            s.coarse_no_gps_pre2010 += 1;
        }
    }
    s
}

/// Posts with coordinates at or after their source's cutoff plus
/// `offset_weeks`.
pub fn post_cutoff_posts<'a>(posts: &'a [PostRecord], cutoffs: &PolicyCutoffs, offset_weeks: u32) -> Vec<&'a PostRecord> {
    let offset = i64::from(offset_weeks) * WEEK_SECONDS;
    posts
        .iter()
        .filter(|p| p.coords.is_some())
        .filter(|p| cutoffs.effective(p.source_app).is_none_or(|c| p.timestamp_utc >= c + offset))
        .collect()
}

/// Key-location inference using only post-cutoff data. `labels` may cover
/// more posts than are used.
pub fn post_cutoff_inference(
    posts: &[PostRecord],
    labels: &HashMap<String, AddressLabel>,
    offset_weeks: u32,
    cutoffs: &PolicyCutoffs,
    ctx: &GeoContext<'_>,
    cfg: &PipelineConfig,
) -> KeyLocRun {
    let kept = post_cutoff_posts(posts, cutoffs, offset_weeks);
    run_key_locations(&kept, labels, ctx, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::geocode::{FileGeocodeProvider, ProximityCache};
    use crate::pipeline::label_posts;
    use crate::temporal::tests::utc;
    use crate::temporal::LongitudeBands;
    use proptest::prelude::*;

    fn post(id: &str, ts: i64, src: SourceApp, kind: GeotagKind, gps: bool) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            user_id: "u".into(),
            timestamp_utc: ts,
            coords: gps.then(|| GeoPoint::new(10.0, 10.0).unwrap()),
            text: String::new(),
            source_app: src,
            geotag_kind: kind,
            place_name: None,
        }
    }

    #[test]
    fn cutoff_examples() {
        let c = PolicyCutoffs::default();
        let ios_pre = post("a", utc(2015, 3, 1, 0, 0), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, true);
        let ios_post = post("b", utc(2015, 6, 1, 0, 0), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, false);
        let android_mid = post("c", utc(2015, 4, 17, 0, 0), SourceApp::AndroidOfficial, GeotagKind::PreciseGps, true);
        let s = leakage_stats([&ios_pre], &c);
        assert_eq!(s.pre_cutoff.coarse_with_coords, 1);
        let s = leakage_stats([&ios_post], &c);
        assert_eq!((s.post_cutoff.coarse, s.post_cutoff.coarse_with_coords), (1, 0));
        let s = leakage_stats([&android_mid], &c);
        assert_eq!(s.pre_cutoff.total, 1);
    }

    #[test]
    fn exact_cutoff_instant_is_post_period() {
        let c = PolicyCutoffs::default();
        let at = post("a", midnight_utc(2015, 4, 15), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, false);
        assert_eq!(leakage_stats([&at], &c).post_cutoff.total, 1);
    }

    #[test]
    fn sources_without_cutoff() {
        let c = PolicyCutoffs::default();
        let fsq = post("f", utc(2012, 1, 1, 0, 0), SourceApp::Foursquare, GeotagKind::PointOfInterest, true);
        assert_eq!(leakage_stats([&fsq], &c).post_cutoff.total, 1);
        assert_eq!(c.effective(SourceApp::Foursquare), Some(midnight_utc(2015, 4, 20)));
        assert!(post_cutoff_posts(std::slice::from_ref(&fsq), &c, 0).is_empty());
    }

    #[test]
    fn pre2010_bucket() {
        let c = PolicyCutoffs::default();
        let posts = [
            post("a", utc(2010, 7, 31, 23, 59), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, false),
            post("b", utc(2010, 8, 1, 0, 0), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, false),
            post("c", utc(2009, 1, 1, 0, 0), SourceApp::IOSOfficial, GeotagKind::CoarsePlace, true),
        ];
        let s = leakage_stats(&posts, &c);
        assert_eq!(s.coarse_no_gps_pre2010, 1);
        assert_eq!(s.pre_cutoff.coarse, 3);
    }

    #[test]
    fn post_cutoff_inference_examples() {
        let home = GeoPoint::new(10.0, 10.0).unwrap();
        let mut provider = FileGeocodeProvider::empty("t", 40.0);
        provider.add_seed(home, AddressLabel::resolved("home"));
        let ctx = GeoContext { provider: &provider, authoritative: None, tz: &LongitudeBands };
        let cfg = PipelineConfig::default();
        let cutoffs = PolicyCutoffs::default();

        let weekend_posts = |start: i64, n: i64| -> Vec<PostRecord> {
            (0..n)
                .flat_map(|w| {
                    [10, 20].map(|h| {
                        let ts = start + w * WEEK_SECONDS + h * 3600;
                        post(&format!("p{ts}"), ts, SourceApp::IOSOfficial, GeotagKind::PreciseGps, true)
                    })
                })
                .collect()
        };
        let before = weekend_posts(utc(2015, 1, 3, 0, 0), 8);
        let cache = ProximityCache::new(2.0);
        let labels = label_posts(&before, &cache, &provider).labels;
        let run = post_cutoff_inference(&before, &labels, 0, &cutoffs, &ctx, &cfg);
        assert_eq!(run.result.home, None);

        let mut both = before.clone();
        both.extend(weekend_posts(utc(2015, 5, 2, 0, 0), 8));
        let labels = label_posts(&both, &cache, &provider).labels;
        let full = run_key_locations(&both.iter().collect::<Vec<_>>(), &labels, &ctx, &cfg);
        let after = post_cutoff_inference(&both, &labels, 0, &cutoffs, &ctx, &cfg);
        let home_label = |r: &KeyLocRun| r.result.home.and_then(|h| r.cluster(h)).map(|c| c.label.clone());
        assert_eq!(home_label(&full), home_label(&after));
        assert_eq!(home_label(&after), Some(AddressLabel::resolved("home")));
    }

    proptest! {
        #[test]
        fn buckets_partition_totals(
            specs in proptest::collection::vec((0i64..400_000_000, 0usize..5, 0usize..4, any::<bool>()), 0..60),
        ) {
            let base = utc(2008, 1, 1, 0, 0);
            let posts: Vec<PostRecord> = specs.iter().enumerate().map(|(i, &(dt, s, k, gps))| {
                let kind = [GeotagKind::PreciseGps, GeotagKind::CoarsePlace, GeotagKind::PointOfInterest, GeotagKind::None][k];
                let gps = match kind { GeotagKind::PreciseGps => true, GeotagKind::None => false, _ => gps };
                post(&i.to_string(), base + dt, SourceApp::ALL[s], kind, gps)
            }).collect();
            let c = PolicyCutoffs::default();
            let s = leakage_stats(&posts, &c);
            prop_assert_eq!(s.pre_cutoff.total + s.post_cutoff.total, posts.len());
            let coarse = posts.iter().filter(|p| p.geotag_kind == GeotagKind::CoarsePlace).count();
            prop_assert_eq!(s.pre_cutoff.coarse + s.post_cutoff.coarse, coarse);
            let with = posts.iter().filter(|p| p.coords.is_some()).count();
            prop_assert_eq!(s.pre_cutoff.with_coords + s.post_cutoff.with_coords, with);

            let four: Vec<&str> = post_cutoff_posts(&posts, &c, 4).iter().map(|p| p.post_id.as_str()).collect();
            let zero: Vec<&str> = post_cutoff_posts(&posts, &c, 0).iter().map(|p| p.post_id.as_str()).collect();
            prop_assert!(four.iter().all(|id| zero.contains(id)));
        }
    }
}

//! Per-user key-location pipeline: label, cluster, localize, infer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{assign_ranks, first_level, second_level_merge, Cluster, DEFAULT_EPS_M, DEFAULT_MERGE_M};
use crate::geo::{AddressLabel, GeoPoint};
use crate::geocode::{
    verify_cluster_addresses, GeocodeProvider, ProximityCache, VerifyOutcome, DEFAULT_CACHE_RADIUS_M,
    DEFAULT_VERIFY_TOP_K,
};
use crate::keyloc::{infer_key_locations, AnalyzedCluster, KeyLocConfig, KeyLocationResult};
use crate::model::PostRecord;
use crate::temporal::{localize, TimezoneProvider};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub cache_m: f64,
    pub eps_m: f64,
    pub merge_m: f64,
    /// Clusters re-geocoded by the authoritative provider, by rank.
    pub verify_top_k: usize,
    pub keyloc: KeyLocConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            cache_m: DEFAULT_CACHE_RADIUS_M,
            eps_m: DEFAULT_EPS_M,
            merge_m: DEFAULT_MERGE_M,
            verify_top_k: DEFAULT_VERIFY_TOP_K,
            keyloc: KeyLocConfig::default(),
        }
    }
}

/// Providers shared by all users.
#[derive(Clone, Copy)]
pub struct GeoContext<'a> {
    pub provider: &'a dyn GeocodeProvider,
    pub authoritative: Option<&'a dyn GeocodeProvider>,
    pub tz: &'a dyn TimezoneProvider,
}

/// Address label per geotagged post.
#[derive(Debug, Clone, Default)]
pub struct Labeling {
    pub labels: HashMap<String, AddressLabel>,
    pub errors: Vec<String>,
}

/// Labels every post that carries coordinates. Provider failures leave the
/// post Unknown and are reported.
pub fn label_posts<'a>(
    posts: impl IntoIterator<Item = &'a PostRecord>,
    cache: &ProximityCache,
    provider: &dyn GeocodeProvider,
) -> Labeling {
    let mut out = Labeling::default();
    for post in posts {
        let Some(p) = post.coords else { continue };
        let label = cache.resolve(p, provider).unwrap_or_else(|e| {
            out.errors.push(format!("post {}: {}", post.post_id, e));
            AddressLabel::Unknown
        });
        out.labels.insert(post.post_id.clone(), label);
    }
    out
}

/// Two-level clustering with ranks assigned; optionally re-verifies the
/// top-ranked addresses.
pub fn build_clusters(
    posts: &[&PostRecord],
    labels: &HashMap<String, AddressLabel>,
    authoritative: Option<&dyn GeocodeProvider>,
    cfg: &PipelineConfig,
) -> (Vec<Cluster>, Option<VerifyOutcome>) {
    let points: Vec<(String, GeoPoint)> =
        posts.iter().filter_map(|p| p.coords.map(|c| (p.post_id.clone(), c))).collect();
    let fl = first_level(&points, labels, cfg.eps_m);
    let mut clusters = second_level_merge(&fl, cfg.merge_m);
    assign_ranks(&mut clusters);
    let verify = authoritative.map(|a| verify_cluster_addresses(&mut clusters, a, cfg.verify_top_k));
    (clusters, verify)
}

/// Localizes and profiles each cluster. Clusters without a time zone are
/// skipped with a diagnostic.
pub fn analyze_clusters(
    clusters: &[Cluster],
    posts: &[&PostRecord],
    tz: &dyn TimezoneProvider,
    cfg: &KeyLocConfig,
    diagnostics: &mut Vec<String>,
) -> Vec<AnalyzedCluster> {
    let by_id: HashMap<&str, &PostRecord> = posts.iter().map(|p| (p.post_id.as_str(), *p)).collect();
    clusters
        .iter()
        .filter_map(|c| match localize(c, &by_id, tz) {
            Ok(local) => Some(AnalyzedCluster::new(c.id, local, &cfg.shift)),
            Err(e) => {
                diagnostics.push(format!("cluster {}: {}", c.id, e));
                None
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct KeyLocRun {
    pub clusters: Vec<Cluster>,
    pub analyzed: Vec<AnalyzedCluster>,
    pub result: KeyLocationResult,
    pub verify: Option<VerifyOutcome>,
}

impl KeyLocRun {
    pub fn cluster(&self, id: crate::cluster::ClusterId) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }
}

/// Cluster, temporal and key-location stages over already-labeled posts.
pub fn run_key_locations(
    posts: &[&PostRecord],
    labels: &HashMap<String, AddressLabel>,
    ctx: &GeoContext<'_>,
    cfg: &PipelineConfig,
) -> KeyLocRun {
    let (clusters, verify) = build_clusters(posts, labels, ctx.authoritative, cfg);
    let mut diagnostics = Vec::new();
    if clusters.is_empty() {
        diagnostics.push("no geotagged posts".to_string());
    }
    let analyzed = analyze_clusters(&clusters, posts, ctx.tz, &cfg.keyloc, &mut diagnostics);
    let mut result = infer_key_locations(&analyzed, &cfg.keyloc);
    diagnostics.append(&mut result.diagnostics);
    result.diagnostics = diagnostics;
    KeyLocRun { clusters, analyzed, result, verify }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geocode::FileGeocodeProvider;
    use crate::model::{GeotagKind, SourceApp};
    use crate::temporal::tests::utc;
    use crate::temporal::LongitudeBands;

    fn post(id: &str, ts: i64, p: GeoPoint) -> PostRecord {
        PostRecord {
            post_id: id.into(),
            user_id: "u".into(),
            timestamp_utc: ts,
            coords: Some(p),
            text: String::new(),
            source_app: SourceApp::IOSOfficial,
            geotag_kind: GeotagKind::PreciseGps,
            place_name: None,
        }
    }

    #[test]
    fn home_found_through_whole_pipeline() {
        let home = GeoPoint::new(51.5, -0.12).unwrap();
        let other = home.offset_m(800.0, 0.0);
        let mut provider = FileGeocodeProvider::empty("t", 40.0);
        provider.add_seed(home, AddressLabel::resolved("1 Home St"));
        let mut posts = Vec::new();
        for w in 0..6 {
            let sat = utc(2015, 1, 3, 0, 0) + w * 7 * 86_400;
            for h in [9, 13, 18, 22] {
                posts.push(post(&format!("h{w}-{h}"), sat + h * 3600, home.offset_m(3.0 * (h % 3) as f64, 1.0)));
            }
            posts.push(post(&format!("o{w}"), sat + 2 * 86_400 + 12 * 3600, other));
        }
        let refs: Vec<&PostRecord> = posts.iter().collect();
        let cache = ProximityCache::new(2.0);
        let lab = label_posts(refs.iter().copied(), &cache, &provider);
        assert!(lab.errors.is_empty());
        let ctx = GeoContext { provider: &provider, authoritative: None, tz: &LongitudeBands };
        let run = run_key_locations(&refs, &lab.labels, &ctx, &PipelineConfig::default());
        let home_id = run.result.home.unwrap();
        assert_eq!(run.cluster(home_id).unwrap().label, AddressLabel::resolved("1 home st"));
        assert_eq!(run.clusters.len(), 2);
    }

    #[test]
    fn empty_input_gives_empty_result() {
        let provider = FileGeocodeProvider::empty("t", 40.0);
        let ctx = GeoContext { provider: &provider, authoritative: None, tz: &LongitudeBands };
        let run = run_key_locations(&[], &HashMap::new(), &ctx, &PipelineConfig::default());
        assert_eq!(run.result.home, None);
        assert!(!run.result.diagnostics.is_empty());
    }
}

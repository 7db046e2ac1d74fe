//! Audit report: one JSON object per line. The first line (`"kind":"run"`)
//! describes the run; every other line (`"kind":"user"`) holds one user's
//! verdicts, sorted by user id.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

use crate::cluster::Cluster;
use crate::config::{CacheScope, PolicyConfig, Stages};
use crate::geocode::VerifyOutcome;
use crate::ingest::LoadStats;
use crate::keyloc::{HomeCandidate, WorkCandidate};
use crate::pipeline::PipelineConfig;
use crate::policy::LeakageStats;
use crate::score::UserPrediction;
use crate::sensitive::{SensitiveConfig, SensitiveFinding};

/// A chosen cluster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationVerdict {
    pub cluster_id: u32,
    /// `None` when the cluster has no resolved address.
    pub address: Option<String>,
    pub lat: f64,
    pub lon: f64,
    pub rank: u32,
    pub size: usize,
    pub max_radius_m: f64,
    /// Home: hour breadth. Work: active weeks inside the dominant frame.
    /// Baselines: 0.
    pub score: f64,
}

impl LocationVerdict {
    pub fn from_cluster(c: &Cluster, score: f64) -> Self {
        LocationVerdict {
            cluster_id: c.id,
            address: (!c.label.is_unknown()).then(|| c.label.address().to_string()),
            lat: c.midpoint.lat(),
            lon: c.midpoint.lon(),
            rank: c.rank,
            size: c.len(),
            max_radius_m: c.max_radius_m,
            score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostCutoffVerdict {
    pub offset_weeks: u32,
    pub geotagged_posts: usize,
    pub home: Option<LocationVerdict>,
    pub work: Option<LocationVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyReport {
    pub leakage: LeakageStats,
    pub post_cutoff: Vec<PostCutoffVerdict>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifySummary {
    pub queried: usize,
    pub relabeled: usize,
}

impl From<&VerifyOutcome> for VerifySummary {
    fn from(v: &VerifyOutcome) -> Self {
        VerifySummary { queried: v.queried, relabeled: v.relabeled }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct UserReport {
    pub kind: &'static str,
    pub user_id: String,
    pub posts: usize,
    pub geotagged_posts: usize,
    pub clusters: usize,
    pub home: Option<LocationVerdict>,
    pub work: Option<LocationVerdict>,
    pub home_candidates: Vec<HomeCandidate>,
    pub work_candidates: Vec<WorkCandidate>,
    pub baselines: BTreeMap<String, Option<LocationVerdict>>,
    pub sensitive: Vec<SensitiveFinding>,
    pub policy: Option<PolicyReport>,
    pub verify: Option<VerifySummary>,
    pub timings_ms: BTreeMap<&'static str, f64>,
    pub diagnostics: Vec<String>,
    /// Compact view of the verdicts for scoring.
    pub prediction: UserPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProviderIds {
    pub geocode: String,
    pub authoritative: Option<String>,
    pub timezone: String,
    pub venues: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMeta {
    pub kind: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub users: usize,
    pub stages: Stages,
    pub baselines: Vec<String>,
    pub cache_scope: CacheScope,
    pub geocode_fallback_m: f64,
    pub pipeline: PipelineConfig,
    pub sensitive: SensitiveConfig,
    pub policy: PolicyConfig,
    pub tfidf_variant: &'static str,
    pub providers: ProviderIds,
    pub load: LoadSummary,
    pub cache: CacheStats,
    pub timings_ms: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LoadSummary {
    pub lines: usize,
    pub parsed: usize,
    pub malformed: usize,
    pub filtered_out: usize,
}

impl From<&LoadStats> for LoadSummary {
    fn from(s: &LoadStats) -> Self {
        LoadSummary { lines: s.lines, parsed: s.parsed, malformed: s.malformed, filtered_out: s.filtered_out }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub meta: RunMeta,
    pub users: Vec<UserReport>,
}

impl AuditReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", serde_json::to_string(&self.meta)?)?;
        for u in &self.users {
            writeln!(w, "{}", serde_json::to_string(u)?)?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn predictions(&self) -> Vec<UserPrediction> {
        self.users.iter().map(|u| u.prediction.clone()).collect()
    }

    pub fn user(&self, user_id: &str) -> Option<&UserReport> {
        self.users.binary_search_by(|u| u.user_id.as_str().cmp(user_id)).ok().map(|i| &self.users[i])
    }

    /// Human-readable run summary.
    pub fn summary(&self) -> String {
        let n = self.users.len();
        let homes = self.users.iter().filter(|u| u.home.is_some()).count();
        let works = self.users.iter().filter(|u| u.work.is_some()).count();
        let pscs: usize = self.users.iter().map(|u| u.sensitive.len()).sum();
        let cb = self.users.iter().flat_map(|u| &u.sensitive).filter(|f| f.content.is_some()).count();
        let db = self.users.iter().flat_map(|u| &u.sensitive).filter(|f| f.duration.is_some()).count();
        let mut leak = LeakageStats::default();
        for u in &self.users {
            if let Some(p) = &u.policy {
                leak.merge(&p.leakage);
            }
        }
        let mut s = String::new();
        s.push_str(&format!("users: {n}\n"));
        s.push_str(&format!("home inferred: {homes}\nwork inferred: {works}\n"));
        if self.meta.stages.sensitive {
            s.push_str(&format!("sensitive clusters: {pscs} (content {cb}, duration {db})\n"));
        }
        if self.meta.stages.policy {
            s.push_str(&format!(
                "coarse posts with coordinates: {} before cutoff, {} after\n",
                leak.pre_cutoff.coarse_with_coords, leak.post_cutoff.coarse_with_coords
            ));
        }
        s.push_str(&format!("geocode cache: {} hits, {} misses\n", self.meta.cache.hits, self.meta.cache.misses));
        for (phase, ms) in &self.meta.timings_ms {
            s.push_str(&format!("time {phase}: {ms:.1} ms\n"));
        }
        s
    }
}
